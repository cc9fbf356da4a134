"""Event-locked epoch extraction and per-rhythm band isolation.

Three analysis windows are used, each tied to a frequency band: mu/beta
desynchronization before movement onset (ERD), the post-movement rebound
(ERS), and the slow pre-movement cortical potential (MRCP).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import FilterSpec, MultiChannelSignal, apply_filter, design_filter
from .edf import MovementEvent, Side
from .errors import DataError


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class AnalysisType:
    name: str  # ERD | ERS | MRCP
    window_s: tuple[float, float]  # relative to event onset
    band: tuple[float, ...]  # (low, high) bandpass or (cutoff,) lowpass
    code: int  # numeric encoding used in the feature matrix

    def window_samples(self, fs: float) -> tuple[int, int]:
        """Start/end sample offsets relative to the onset sample."""
        return (
            round_half_up(self.window_s[0] * fs),
            round_half_up(self.window_s[1] * fs),
        )

    def band_filter(self, fs: float, order: int = 4) -> FilterSpec:
        if len(self.band) == 2:
            return design_filter("bandpass", self.band, order, fs=fs)
        return design_filter("lowpass", self.band, order, fs=fs)


ERD = AnalysisType("ERD", (-2.0, 0.0), (8.0, 30.0), code=1)
ERS = AnalysisType("ERS", (4.1, 5.1), (8.0, 30.0), code=2)
MRCP = AnalysisType("MRCP", (-2.0, 0.0), (3.0,), code=3)

ANALYSES = {a.name: a for a in (ERD, ERS, MRCP)}


def get_analysis(name: str) -> AnalysisType:
    key = name.strip().upper()
    if key not in ANALYSES:
        raise DataError(f"unknown analysis {name!r} (expected ERD, ERS, or MRCP)")
    return ANALYSES[key]


@dataclass(frozen=True, eq=False)
class Epoch:
    data: np.ndarray  # channels x window samples, microvolts
    side: Side
    analysis: AnalysisType
    event: MovementEvent
    fs: float

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class EpochedDataset:
    """Epochs sharing one (analysis, side) pair for a single run."""

    epochs: list[Epoch]
    run_id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.epochs:
            raise DataError("EpochedDataset cannot be empty")
        sides = {e.side for e in self.epochs}
        names = {e.analysis.name for e in self.epochs}
        if len(sides) != 1 or len(names) != 1:
            raise DataError("epochs in one dataset must share side and analysis")

    @property
    def side(self) -> Side:
        return self.epochs[0].side

    @property
    def analysis(self) -> AnalysisType:
        return self.epochs[0].analysis

    @property
    def fs(self) -> float:
        return self.epochs[0].fs

    def concatenated(self) -> np.ndarray:
        """Channels x total-samples matrix of all epochs back to back."""
        return np.concatenate([e.data for e in self.epochs], axis=1)


@dataclass
class SkipReport:
    produced: int = 0
    skipped: int = 0
    skipped_onsets: list[float] = field(default_factory=list)


def extract_epochs(
    signal: MultiChannelSignal,
    events: list[MovementEvent],
    analysis: AnalysisType,
    report: SkipReport | None = None,
) -> list[Epoch]:
    """Cut one window per event; windows crossing a record edge are skipped
    (and counted) rather than padded, so power stats stay unbiased."""
    lo, hi = analysis.window_samples(signal.fs)
    out = []
    for ev in events:
        onset = round_half_up(ev.onset_s * signal.fs)
        start, stop = onset + lo, onset + hi
        if start < 0 or stop > signal.n_samples:
            if report is not None:
                report.skipped += 1
                report.skipped_onsets.append(ev.onset_s)
            continue
        out.append(
            Epoch(
                data=np.ascontiguousarray(signal.data[:, start:stop]),
                side=ev.side,
                analysis=analysis,
                event=ev,
                fs=signal.fs,
            )
        )
        if report is not None:
            report.produced += 1
    return out


def group_by_side(epochs: list[Epoch], run_id: str,
                  labels: tuple[str, ...]) -> tuple[EpochedDataset, EpochedDataset]:
    """Partition into (left, right) datasets, preserving order within a side."""
    left = [e for e in epochs if e.side is Side.LEFT]
    right = [e for e in epochs if e.side is Side.RIGHT]
    if not left or not right:
        missing = "Left" if not left else "Right"
        name = epochs[0].analysis.name if epochs else "?"
        raise DataError(
            f"run {run_id}: no {missing} epochs for {name}; run unusable for this analysis"
        )
    return (
        EpochedDataset(left, run_id=run_id, labels=labels),
        EpochedDataset(right, run_id=run_id, labels=labels),
    )


def isolate_rhythm(dataset: EpochedDataset, order: int = 4) -> EpochedDataset:
    """Apply the analysis band filter (zero phase) to every epoch."""
    spec = dataset.analysis.band_filter(dataset.fs, order)
    filtered = []
    for ep in dataset.epochs:
        sig = MultiChannelSignal(dataset.labels, ep.data, ep.fs)
        out = apply_filter(spec, sig, mode="zero_phase")
        filtered.append(replace(ep, data=out.data))
    return EpochedDataset(filtered, run_id=dataset.run_id, labels=dataset.labels)
