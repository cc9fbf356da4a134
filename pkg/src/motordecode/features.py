"""Feature construction: activation statistics, matrix assembly, scaling.

Each (run, analysis, side) dataset contributes one row: the per-component
mean, power, and energy of its ICA activations, the analysis code, and the
side target. Input columns are linearly rescaled into [0.1, 0.9].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edf import Side
from .errors import DataError

N_COMPONENTS = 8
NORM_LO = 0.1
NORM_HI = 0.9

STAT_NAMES = (
    tuple(f"power_c{i+1}" for i in range(N_COMPONENTS))
    + tuple(f"mean_c{i+1}" for i in range(N_COMPONENTS))
    + tuple(f"energy_c{i+1}" for i in range(N_COMPONENTS))
)
COLUMN_NAMES = STAT_NAMES + ("type", "side")
N_INPUT_COLUMNS = len(STAT_NAMES) + 1  # stats + type
N_COLUMNS = len(COLUMN_NAMES)

# Feature-subset legend: P power, M mean, E energy, X analysis type.
SUBSETS = ("All", "PX", "MX", "EX", "PMX", "MEX", "PEX")


def compute_stats(activations: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-component (mean, power, energy) over the activation samples."""
    acts = np.asarray(activations, dtype=np.float64)
    if acts.ndim != 2 or acts.shape[1] < 1:
        raise DataError("activations must be components x samples with samples >= 1")
    n_samples = acts.shape[1]
    mean = acts.mean(axis=1)
    energy = np.sum(acts * acts, axis=1)
    power = energy / n_samples
    return mean, power, energy


@dataclass(frozen=True)
class FeatureVector:
    subject: str
    run: int
    analysis: str
    analysis_code: int
    side: Side
    mean: tuple[float, ...]
    power: tuple[float, ...]
    energy: tuple[float, ...]
    n_samples: int

    def key(self) -> tuple:
        return (self.subject, self.run, self.analysis, self.side.value)

    def input_row(self) -> np.ndarray:
        return np.array(
            self.power + self.mean + self.energy + (float(self.analysis_code),)
        )


@dataclass
class FeatureMatrix:
    values: np.ndarray  # rows x 26, target side in the last column
    row_keys: list[tuple]
    column_names: tuple[str, ...] = COLUMN_NAMES
    normalization: list[tuple[float, float]] | None = None  # per input column

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != N_COLUMNS:
            raise DataError(f"feature matrix must have {N_COLUMNS} columns")
        if len(self.row_keys) != self.values.shape[0]:
            raise DataError("row keys must match row count")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def inputs(self) -> np.ndarray:
        return self.values[:, :N_INPUT_COLUMNS]

    def targets(self) -> np.ndarray:
        return self.values[:, -1]

    def sample_counts(self) -> np.ndarray:
        """Activation sample count per row (last element of each row key)."""
        return np.array([key[4] for key in self.row_keys])


def assemble_matrix(vectors: list[FeatureVector]) -> FeatureMatrix:
    """Stack feature vectors in deterministic (subject, run, analysis, side)
    order; duplicate keys are a pipeline bug and raise."""
    if not vectors:
        raise DataError("no feature vectors to assemble")
    seen = set()
    for v in vectors:
        if v.key() in seen:
            raise DataError(f"duplicate feature vector for {v.key()}")
        seen.add(v.key())
    analysis_rank = {"ERD": 1, "ERS": 2, "MRCP": 3}
    ordered = sorted(
        vectors,
        key=lambda v: (v.subject, v.run, analysis_rank.get(v.analysis, 99), v.side.value),
    )
    rows = []
    keys = []
    for v in ordered:
        side_code = 0.0 if v.side is Side.LEFT else 1.0
        rows.append(np.concatenate([v.input_row(), [side_code]]))
        keys.append((v.subject, v.run, v.analysis, v.side.value, v.n_samples))
    return FeatureMatrix(values=np.vstack(rows), row_keys=keys)


def normalize_columns(matrix: FeatureMatrix,
                      bounds: list[tuple[float, float]] | None = None) -> FeatureMatrix:
    """Map every input column into [0.1, 0.9]; the side target is untouched.

    When ``bounds`` is given (training-fold ranges), those are applied
    instead of the matrix's own min/max; constant columns map to the
    midpoint.
    """
    if matrix.n_rows < 2 and bounds is None:
        raise DataError("normalization needs at least 2 rows to fix a range")
    values = matrix.values.copy()
    used: list[tuple[float, float]] = []
    for col in range(N_INPUT_COLUMNS):
        if bounds is not None:
            lo, hi = bounds[col]
        else:
            lo = float(values[:, col].min())
            hi = float(values[:, col].max())
        used.append((lo, hi))
        if hi > lo:
            values[:, col] = NORM_LO + (NORM_HI - NORM_LO) * (
                (values[:, col] - lo) / (hi - lo)
            )
        else:
            values[:, col] = 0.5 * (NORM_LO + NORM_HI)
    return FeatureMatrix(
        values=values,
        row_keys=list(matrix.row_keys),
        column_names=matrix.column_names,
        normalization=used,
    )


def subset_columns(subset: str) -> list[int]:
    """Column indices (into the 25 input columns) for a named subset."""
    name = subset.strip().upper()
    if name == "ALL":
        return list(range(N_INPUT_COLUMNS))
    blocks = {
        "P": list(range(0, 8)),
        "M": list(range(8, 16)),
        "E": list(range(16, 24)),
        "X": [24],
    }
    cols: list[int] = []
    for ch in name:
        if ch not in blocks:
            raise DataError(f"unknown feature subset {subset!r}")
        cols.extend(blocks[ch])
    if not cols:
        raise DataError(f"empty feature subset {subset!r}")
    return cols


def to_csv(matrix: FeatureMatrix) -> str:
    """Canonical delimited form: header row then full-precision values."""
    lines = [",".join(matrix.column_names)]
    for row in matrix.values:
        lines.append(",".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def rows_csv(matrix: FeatureMatrix) -> str:
    """Row provenance sidecar (subject, run, analysis, side, sample count)."""
    lines = ["subject,run,analysis,side,n_samples"]
    for key in matrix.row_keys:
        lines.append(",".join(str(k) for k in key))
    return "\n".join(lines) + "\n"
