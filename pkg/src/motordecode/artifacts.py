"""BSS-based removal of ocular and muscular contamination.

Decomposition is second-order: joint diagonalization of lagged covariance
matrices (Jacobi rotations on whitened data). It is deterministic, needs no
nonlinearity tuning, and separates sources by their autocorrelation
structure, which is what distinguishes blinks (slow, frontal) and muscle
bursts (broadband) from cortical rhythms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .dsp import FRONTAL_LABELS, MultiChannelSignal
from .errors import DataError

DEFAULT_LAGS = 50
DEFAULT_EOG_THRESHOLD = 0.6  # power fraction below EOG_BAND_HZ
DEFAULT_EMG_THRESHOLD = 0.6  # power fraction above EMG_BAND_HZ
EOG_BAND_HZ = 4.0
EMG_BAND_HZ = 30.0
# Components with a log-log spectral slope above this (dB per octave) are
# "flat or rising", i.e. broadband; cortical EEG falls off much faster.
EMG_SLOPE_MIN_DB = -1.0

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BssDecomposition:
    mixing: np.ndarray  # channels x components
    unmixing: np.ndarray  # components x channels
    sources: np.ndarray  # components x samples
    channel_means: np.ndarray
    labels: tuple[str, ...]
    fs: float

    @property
    def n_components(self) -> int:
        return self.mixing.shape[1]


@dataclass
class RemovalReport:
    stage: str  # EOG | EMG
    removed_component_indices: list[int]
    scores: dict[str, list[float]]
    variance_removed_fraction: float = 0.0

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "removed_component_indices": list(self.removed_component_indices),
            "scores": {k: [float(v) for v in vals] for k, vals in self.scores.items()},
            "variance_removed_fraction": float(self.variance_removed_fraction),
        }


def lagged_covariances(z: np.ndarray, n_lags: int) -> np.ndarray:
    """Symmetrized covariance matrices of z at lags 0..n_lags."""
    n_ch, n_samples = z.shape
    lags = range(min(n_lags, n_samples - 2) + 1)
    stack = np.empty((len(lags), n_ch, n_ch))
    for idx, lag in enumerate(lags):
        if lag == 0:
            c = (z @ z.T) / n_samples
        else:
            c = (z[:, :-lag] @ z[:, lag:].T) / (n_samples - lag)
        stack[idx] = 0.5 * (c + c.T)
    return stack


def joint_diagonalize(matrices: np.ndarray, tol: float = 1e-12,
                      max_sweeps: int = 200) -> np.ndarray:
    """Orthogonal V approximately diagonalizing every matrix in the stack."""
    k, n, _ = matrices.shape
    m = matrices.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                g1 = m[:, p, p] - m[:, q, q]
                g2 = m[:, p, q] + m[:, q, p]
                ton = g1 @ g1 - g2 @ g2
                toff = 2.0 * (g1 @ g2)
                theta = 0.5 * np.arctan2(toff, ton + np.hypot(ton, toff))
                s = np.sin(theta)
                if abs(s) <= tol:
                    continue
                rotated = True
                c = np.cos(theta)
                rot = np.array([[c, -s], [s, c]])
                m[:, :, [p, q]] = m[:, :, [p, q]] @ rot
                m[:, [p, q], :] = np.einsum("ab,kbn->kan", rot.T, m[:, [p, q], :])
                v[:, [p, q]] = v[:, [p, q]] @ rot
        if not rotated:
            break
    return v


def decompose(signal: MultiChannelSignal, n_lags: int = DEFAULT_LAGS) -> BssDecomposition:
    """Full-rank second-order decomposition of a multichannel signal."""
    x = signal.data
    n_ch, n_samples = x.shape
    if n_ch < 2:
        raise DataError("decomposition needs at least 2 channels")
    if n_samples < 10 * n_ch:
        raise DataError(
            f"decomposition needs >= {10 * n_ch} samples for {n_ch} channels, "
            f"got {n_samples}"
        )
    means = x.mean(axis=1)
    xc = x - means[:, None]
    cov = (xc @ xc.T) / n_samples
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 0 or eigvals[0] <= RANK_TOL * eigvals[-1]:
        raise DataError(
            "covariance is rank deficient (constant or linearly dependent "
            "channel); prune channels before decomposition"
        )
    whitener = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    color = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    z = whitener @ xc

    v = joint_diagonalize(lagged_covariances(z, n_lags))

    mixing = color @ v
    unmixing = v.T @ whitener

    # Canonical order and sign: strongest back-projection first, dominant
    # projection weight positive.
    strength = np.sum(mixing**2, axis=0)
    order = np.argsort(-strength, kind="stable")
    mixing = mixing[:, order]
    unmixing = unmixing[order, :]
    signs = np.sign(mixing[np.argmax(np.abs(mixing), axis=0), np.arange(n_ch)])
    signs[signs == 0] = 1.0
    mixing = mixing * signs
    unmixing = unmixing * signs[:, None]

    return BssDecomposition(
        mixing=mixing,
        unmixing=unmixing,
        sources=unmixing @ xc,
        channel_means=means,
        labels=signal.labels,
        fs=signal.fs,
    )


def _component_spectra(dec: BssDecomposition):
    nperseg = min(256, dec.sources.shape[1])
    freqs, psd = sps.welch(dec.sources, fs=dec.fs, nperseg=nperseg, axis=1)
    return freqs, psd


def _band_fraction(freqs: np.ndarray, psd_row: np.ndarray, mask: np.ndarray) -> float:
    total = psd_row.sum()
    if total <= 0:
        return 0.0
    return float(psd_row[mask].sum() / total)


def flag_eog(dec: BssDecomposition,
             frontal_labels=FRONTAL_LABELS,
             threshold: float = DEFAULT_EOG_THRESHOLD) -> list[int]:
    """Components that are both slow (< EOG_BAND_HZ dominated) and project
    most strongly onto the frontal row."""
    frontal = {lab for lab in frontal_labels}
    frontal_idx = [i for i, lab in enumerate(dec.labels) if lab in frontal]
    if not frontal_idx:
        return []
    freqs, psd = _component_spectra(dec)
    low = freqs < EOG_BAND_HZ
    flagged = []
    for i in range(dec.n_components):
        frac = _band_fraction(freqs, psd[i], low)
        peak_channel = int(np.argmax(np.abs(dec.mixing[:, i])))
        if frac >= threshold and peak_channel in frontal_idx:
            flagged.append(i)
    return flagged


def eog_scores(dec: BssDecomposition) -> dict[str, list[float]]:
    freqs, psd = _component_spectra(dec)
    low = freqs < EOG_BAND_HZ
    fracs = [_band_fraction(freqs, psd[i], low) for i in range(dec.n_components)]
    frontal_peak = [
        float(np.argmax(np.abs(dec.mixing[:, i]))) for i in range(dec.n_components)
    ]
    return {"low_freq_fraction": fracs, "peak_channel": frontal_peak}


def flag_emg(dec: BssDecomposition,
             threshold: float = DEFAULT_EMG_THRESHOLD,
             exclude: list[int] | None = None) -> list[int]:
    """Components dominated by broadband high-frequency power with a flat or
    rising spectrum."""
    freqs, psd = _component_spectra(dec)
    high = freqs > EMG_BAND_HZ
    skip = set(exclude or ())
    flagged = []
    for i in range(dec.n_components):
        if i in skip:
            continue
        frac = _band_fraction(freqs, psd[i], high)
        if frac >= threshold and _spectral_slope_db(freqs, psd[i]) >= EMG_SLOPE_MIN_DB:
            flagged.append(i)
    return flagged


def emg_scores(dec: BssDecomposition) -> dict[str, list[float]]:
    freqs, psd = _component_spectra(dec)
    high = freqs > EMG_BAND_HZ
    return {
        "high_freq_fraction": [
            _band_fraction(freqs, psd[i], high) for i in range(dec.n_components)
        ],
        "slope_db_per_octave": [
            _spectral_slope_db(freqs, psd[i]) for i in range(dec.n_components)
        ],
    }


def _spectral_slope_db(freqs: np.ndarray, psd_row: np.ndarray) -> float:
    """Least-squares slope of PSD in dB against log2 frequency."""
    mask = (freqs >= EOG_BAND_HZ) & (freqs <= 0.95 * freqs[-1]) & (psd_row > 0)
    if mask.sum() < 2:
        return -np.inf
    x = np.log2(freqs[mask])
    y = 10.0 * np.log10(psd_row[mask])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def remove_components(signal: MultiChannelSignal, dec: BssDecomposition,
                      indices: list[int], stage: str = "EOG",
                      scores: dict[str, list[float]] | None = None,
                      ) -> tuple[MultiChannelSignal, RemovalReport]:
    """Reconstruct the signal with the flagged components' mixing columns
    zeroed; channel means are restored afterwards."""
    for i in indices:
        if not 0 <= i < dec.n_components:
            raise DataError(
                f"component index {i} out of range 0..{dec.n_components - 1}"
            )
    mixing = dec.mixing.copy()
    if indices:
        mixing[:, list(indices)] = 0.0
    cleaned = mixing @ dec.sources + dec.channel_means[:, None]

    centered = signal.data - dec.channel_means[:, None]
    orig_energy = float(np.sum(centered**2))
    clean_energy = float(np.sum((cleaned - dec.channel_means[:, None]) ** 2))
    removed_fraction = 0.0
    if orig_energy > 0:
        removed_fraction = min(1.0, max(0.0, 1.0 - clean_energy / orig_energy))

    report = RemovalReport(
        stage=stage,
        removed_component_indices=sorted(int(i) for i in indices),
        scores=scores or {},
        variance_removed_fraction=removed_fraction,
    )
    return signal.with_data(cleaned), report


def run_aar(signal: MultiChannelSignal,
            frontal_labels=FRONTAL_LABELS,
            eog_threshold: float = DEFAULT_EOG_THRESHOLD,
            emg_threshold: float = DEFAULT_EMG_THRESHOLD,
            n_lags: int = DEFAULT_LAGS,
            ) -> tuple[MultiChannelSignal, list[RemovalReport]]:
    """Two-stage automatic artifact removal: ocular first, then muscular.

    Both stages flag components of one decomposition; removing the ocular
    components first would leave the data rank deficient, which a second
    full decomposition cannot accept.
    """
    dec = decompose(signal, n_lags=n_lags)
    eog = flag_eog(dec, frontal_labels=frontal_labels, threshold=eog_threshold)
    _, eog_report = remove_components(
        signal, dec, eog, stage="EOG", scores=eog_scores(dec)
    )
    emg = flag_emg(dec, threshold=emg_threshold, exclude=eog)
    cleaned, emg_report = remove_components(
        signal, dec, sorted(set(eog) | set(emg)), stage="EMG", scores=emg_scores(dec)
    )
    emg_report.removed_component_indices = sorted(emg)
    emg_report.variance_removed_fraction = max(
        0.0,
        emg_report.variance_removed_fraction - eog_report.variance_removed_fraction,
    )
    return cleaned, [eog_report, emg_report]
