"""Synthetic fist-movement EEG with planted, known class structure.

Records carry pink background noise, lateralized 10 Hz mu oscillations on
the central channels, and a slow pre-movement drift. Around each cued
movement the contralateral mu amplitude drops before onset and rebounds
afterwards, and the drift deepens contralaterally, so Left and Right trials
are separable by construction when the effect depth is positive and
indistinguishable when it is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .dsp import MONTAGE_LABELS
from .edf import RawRecord, make_record
from .errors import ConfigError

CUE_DURATION_S = 4.1
CUE_PERIOD_S = 8.2
LEAD_IN_S = 6.0
TAIL_S = 8.0

# Pre-onset suppression and post-movement rebound windows (onset-relative
# seconds), matching the analysis windows downstream.
ERD_WINDOW = (-2.0, 0.0)
ERS_WINDOW = (4.1, 5.1)

# Baseline hemispheric asymmetry of the mu generators; without it the
# ordered component-power features would be mirror images across sides.
# Distinct peak frequencies per hemisphere also keep the two generators
# linearly separable (equal-frequency sinusoids span one rotationally
# degenerate plane).
MU_BASE_AMPLITUDE = {"C3": 11.0, "C4": 7.0}
MU_HZ = {"C3": 10.6, "C4": 9.2}
MU_SPREAD = {"C3": ("C1", 0.45), "C4": ("C2", 0.45)}

# One slow pre-movement generator per hemisphere, spread over the central
# row. The negativity accelerates toward onset and recovers quickly, which
# keeps its energy in the 0.5-3 Hz band that survives both the broadband
# highpass and the slow-potential lowpass; a plain 2 s ramp would lose ~99%
# of its epoch power to the 0.5 Hz edge. The hemispheric drifts are
# strongly correlated in time, so what survives mixing is their combined
# power; the contralateral gain and ipsilateral loss are sized so total
# drift power separates the sides.
DRIFT_TOPOGRAPHY = {
    "C3": {"C3": 1.0, "C1": 0.6, "CZ": 0.35},
    "C4": {"C4": 1.0, "C2": 0.6, "CZ": 0.35},
}
# Sized so the in-band (0.5-3 Hz) power surviving the preprocessing edge is
# on the same scale as the mu-band powers; the feature columns are shared
# across analysis types, so a much weaker slow potential would be crushed
# into the bottom of the normalized range and become invisible.
DRIFT_BASE_AMPLITUDE = {"C3": 60.0, "C4": 36.0}
DRIFT_CURVE = {"C3": 6, "C4": 9}  # pre-onset acceleration exponent
DRIFT_RECOVERY_S = 0.4
# The raw accelerating ramp has sharp edges whose harmonics would splash
# into the mu/beta band; the generator band-limits the drift trace to this
# range so it lives strictly below the oscillatory analyses.
DRIFT_BAND_HZ = (0.7, 2.5)
# Effect-size multipliers relative to erd_depth.
ERS_BOOST = 3.0  # rebound power gain factor
DRIFT_CONTRA_GAIN = 1.6
DRIFT_IPSI_LOSS = 0.6


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 6
    n_runs: int = 3
    # Even default keeps per-side epoch counts equal, so energy features
    # carry no event-count signature.
    events_per_run: int = 16
    fs: float = 160.0
    mu_amplitude: float = 1.0  # scales MU_BASE_AMPLITUDE
    erd_depth: float = 0.6  # contralateral power reduction fraction
    noise_level: float = 2.0  # pink noise sigma, microvolts
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.erd_depth < 1.0:
            raise ConfigError(f"erd_depth must be in [0, 1), got {self.erd_depth}")
        top = max(MU_HZ.values())
        if self.fs <= 2 * top:
            raise ConfigError(f"fs {self.fs} too low to carry a {top} Hz rhythm")
        if self.n_subjects < 1 or self.n_runs < 1 or self.events_per_run < 2:
            raise ConfigError("need >= 1 subject/run and >= 2 events per run")


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """1/f-shaped noise, unit variance."""
    white = rng.normal(size=n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    freqs[0] = freqs[1] if n > 1 else 1.0
    shaped = np.fft.irfft(spectrum / np.sqrt(freqs), n=n)
    std = shaped.std()
    return shaped / std if std > 0 else shaped


def _event_schedule(rng: np.random.Generator, n_events: int) -> list[tuple[float, str]]:
    """Cue onsets with near-balanced shuffled sides (both always present).

    For odd counts the side receiving the extra cue is random per run, so
    epoch counts carry no class information across runs.
    """
    half = n_events // 2
    sides = ["T1"] * half + ["T2"] * (n_events - 2 * half) + ["T2"] * half
    if n_events % 2 and rng.random() < 0.5:
        sides[half] = "T1"
    order = rng.permutation(n_events)
    return [
        (LEAD_IN_S + i * CUE_PERIOD_S, sides[order[i]])
        for i in range(n_events)
    ]


def _window_gain(t: np.ndarray, onset: float, window: tuple[float, float],
                 gain: float) -> np.ndarray:
    """Multiplicative envelope equal to ``gain`` inside the window, 1 outside."""
    lo, hi = onset + window[0], onset + window[1]
    env = np.ones_like(t)
    env[(t >= lo) & (t < hi)] = gain
    return env


def generate_record(spec: SynthSpec, subject: int, run: int) -> RawRecord:
    """One synthetic run for one pseudo-subject."""
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, subject, run]).generate_state(1)[0]
    )
    schedule = _event_schedule(rng, spec.events_per_run)
    duration = LEAD_IN_S + (spec.events_per_run - 1) * CUE_PERIOD_S + CUE_DURATION_S + TAIL_S
    n = int(round(duration * spec.fs))
    # pad to whole seconds so the EDF writer can use 1 s data records
    n = int(np.ceil(n / spec.fs) * spec.fs)
    t = np.arange(n) / spec.fs

    labels = list(MONTAGE_LABELS)
    index = {lab: i for i, lab in enumerate(labels)}
    data = np.vstack([spec.noise_level * _pink_noise(rng, n) for _ in labels])

    erd_gain = float(np.sqrt(1.0 - spec.erd_depth))
    ers_gain = float(np.sqrt(1.0 + ERS_BOOST * spec.erd_depth))

    # Contralateral mapping: left-hand cues modulate the right hemisphere.
    contra = {"T1": "C4", "T2": "C3"}

    for channel, base in MU_BASE_AMPLITUDE.items():
        phase = rng.uniform(0, 2 * np.pi)
        carrier = np.sin(2 * np.pi * MU_HZ[channel] * t + phase)
        # slow random amplitude modulation keeps the rhythm realistic
        wobble = 1.0 + 0.1 * _pink_noise(rng, n)
        envelope = np.ones(n)
        for onset, cue in schedule:
            if contra[cue] != channel:
                continue
            envelope = envelope * _window_gain(t, onset, ERD_WINDOW, erd_gain)
            envelope = envelope * _window_gain(t, onset, ERS_WINDOW, ers_gain)
        source = spec.mu_amplitude * base * carrier * wobble * envelope
        data[index[channel]] += source
        neighbour, weight = MU_SPREAD[channel]
        data[index[neighbour]] += weight * source

    # Slow pre-movement negativity, one generator per hemisphere with its
    # own acceleration exponent; the contralateral one deepens with effect
    # size. The trace is band-limited before mixing into the channels.
    drift_sos = sps.butter(4, DRIFT_BAND_HZ, btype="bandpass", fs=spec.fs,
                           output="sos")
    for hemi, base in DRIFT_BASE_AMPLITUDE.items():
        trace = np.zeros(n)
        for onset, cue in schedule:
            lo = int(round((onset - 2.0) * spec.fs))
            hi = int(round(onset * spec.fs))
            rebound = int(round((onset + DRIFT_RECOVERY_S) * spec.fs))
            if lo < 0 or rebound > n:
                continue
            ramp = np.linspace(0.0, 1.0, hi - lo) ** DRIFT_CURVE[hemi]
            decay = np.linspace(1.0, 0.0, rebound - hi)
            if hemi == contra[cue]:
                gain = 1.0 + DRIFT_CONTRA_GAIN * spec.erd_depth
            else:
                gain = 1.0 - DRIFT_IPSI_LOSS * spec.erd_depth
            trace[lo:rebound] -= np.concatenate([ramp, decay]) * base * gain
        trace = sps.sosfiltfilt(drift_sos, trace)
        for channel, weight in DRIFT_TOPOGRAPHY[hemi].items():
            data[index[channel]] += weight * trace

    annotations = []
    cursor = 0.0
    for onset, cue in schedule:
        if onset > cursor:
            annotations.append((cursor, onset - cursor, "T0"))
        annotations.append((onset, CUE_DURATION_S, cue))
        cursor = onset + CUE_DURATION_S
    if cursor < duration:
        annotations.append((cursor, duration - cursor, "T0"))

    record_id = f"Y{subject:03d}R{run:02d}"
    return make_record(labels, data, spec.fs, annotations, record_id=record_id)


def synth_generate(spec: SynthSpec) -> list[RawRecord]:
    """All records for the spec, ordered by (subject, run)."""
    return [
        generate_record(spec, subject, run)
        for subject in range(1, spec.n_subjects + 1)
        for run in range(1, spec.n_runs + 1)
    ]
