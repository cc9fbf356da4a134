"""IIR filter design/application and montage channel selection.

Filters are Butterworth cascades in second-order sections (the notch is a
single biquad); offline preprocessing runs them forward-backward for zero
phase distortion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, DataError

# 8-channel fronto-central montage used for movement-potential analysis.
MONTAGE_LABELS = ("FC3", "FCZ", "FC4", "C3", "C1", "CZ", "C2", "C4")
FRONTAL_LABELS = ("FC3", "FCZ", "FC4")

DEFAULT_ORDER = 4
DEFAULT_NOTCH_Q = 35.0

# Impulse response is considered settled once it decays below this fraction
# of its peak; used for zero-phase edge padding and minimum-length checks.
SETTLE_FRACTION = 1e-4


@dataclass(frozen=True, eq=False)
class FilterSpec:
    kind: str  # bandpass | lowpass | notch
    edges: tuple[float, ...]
    order: int
    fs: float
    sos: np.ndarray = field(repr=False)

    def response(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Complex frequency response sampled at the given frequencies."""
        _, h = sps.sosfreqz(self.sos, worN=np.asarray(freqs_hz, dtype=float), fs=self.fs)
        return h

    def magnitude_db(self, freqs_hz: np.ndarray) -> np.ndarray:
        mag = np.abs(self.response(freqs_hz))
        return 20.0 * np.log10(np.maximum(mag, 1e-300))

    def warmup_samples(self) -> int:
        """Samples until the impulse response decays below SETTLE_FRACTION."""
        radius = max(abs(p) for sec in self.sos for p in np.roots(sec[3:]))
        if radius >= 1.0:
            raise DataError(f"{self.kind} filter has a pole on/outside the unit circle")
        if radius == 0.0:
            return 1
        return max(1, int(math.ceil(math.log(SETTLE_FRACTION) / math.log(radius))))


@dataclass(frozen=True, eq=False)
class MultiChannelSignal:
    labels: tuple[str, ...]
    data: np.ndarray  # channels x samples, microvolts
    fs: float

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(self.labels):
            raise DataError("data must be channels x samples matching labels")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("channel labels must be unique")
        if self.fs <= 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "MultiChannelSignal":
        return MultiChannelSignal(self.labels, data, self.fs)


def design_filter(kind: str, edges, order: int = DEFAULT_ORDER, *, fs: float,
                  notch_q: float = DEFAULT_NOTCH_Q) -> FilterSpec:
    """Design a stable Butterworth bandpass/lowpass or a biquad notch."""
    edges = tuple(float(e) for e in (edges if np.iterable(edges) else (edges,)))
    nyquist = fs / 2.0
    if order < 1:
        raise ConfigError(f"filter order must be >= 1, got {order}")
    if order > 12:
        raise ConfigError(f"filter order {order} outside supported range 1..12")
    for e in edges:
        if e <= 0:
            raise ConfigError(f"filter edge {e} Hz must be positive")
        if e >= nyquist:
            raise ConfigError(f"filter edge {e} Hz is at or above Nyquist ({nyquist} Hz)")

    if kind == "bandpass":
        if len(edges) != 2 or edges[0] >= edges[1]:
            raise ConfigError(f"bandpass needs two ascending edges, got {edges}")
        sos = sps.butter(order, edges, btype="bandpass", fs=fs, output="sos")
    elif kind == "lowpass":
        if len(edges) != 1:
            raise ConfigError(f"lowpass needs one edge, got {edges}")
        sos = sps.butter(order, edges[0], btype="lowpass", fs=fs, output="sos")
    elif kind == "notch":
        if len(edges) != 1:
            raise ConfigError(f"notch needs one center frequency, got {edges}")
        b, a = sps.iirnotch(edges[0], notch_q, fs=fs)
        sos = np.concatenate([b, a]).reshape(1, 6)
    else:
        raise ConfigError(f"unknown filter kind {kind!r}")

    spec = FilterSpec(kind=kind, edges=edges, order=order, fs=fs, sos=sos)
    spec.warmup_samples()  # stability check: raises on non-decaying poles
    return spec


def apply_filter(spec: FilterSpec, signal: MultiChannelSignal,
                 mode: str = "zero_phase") -> MultiChannelSignal:
    """Filter every channel; zero_phase mode is forward-backward with
    reflection padding of one warm-up length at each edge."""
    if abs(spec.fs - signal.fs) > 1e-9:
        raise DataError(
            f"filter designed for {spec.fs} Hz applied to {signal.fs} Hz data"
        )
    if signal.n_samples == 0:
        return signal.with_data(signal.data.copy())
    if mode == "causal":
        out = sps.sosfilt(spec.sos, signal.data, axis=1)
    elif mode == "zero_phase":
        warmup = spec.warmup_samples()
        if signal.n_samples <= warmup:
            raise DataError(
                f"zero-phase filtering needs more than {warmup} samples "
                f"(signal has {signal.n_samples})"
            )
        out = sps.sosfiltfilt(
            spec.sos, signal.data, axis=1, padtype="even", padlen=warmup
        )
    else:
        raise ConfigError(f"unknown filter mode {mode!r}")
    return signal.with_data(np.ascontiguousarray(out))


def select_channels(signal: MultiChannelSignal, wanted) -> MultiChannelSignal:
    """Reorder/restrict channels to the wanted labels (normalized match)."""
    index = {label: i for i, label in enumerate(signal.labels)}
    picks = []
    for label in wanted:
        if label not in index:
            raise DataError(
                f"channel {label!r} not present; available: {', '.join(signal.labels)}"
            )
        picks.append(index[label])
    return MultiChannelSignal(
        labels=tuple(signal.labels[i] for i in picks),
        data=np.ascontiguousarray(signal.data[picks]),
        fs=signal.fs,
    )
