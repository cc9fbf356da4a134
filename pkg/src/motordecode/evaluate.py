"""Evaluation protocol: repeated random 80/20 splits over hyperparameter
grids and feature subsets, aggregated into a result table.

Splits are stratified by class by default (an unstratified mode exists for
strict protocol parity); the best grid point per (subset, classifier) is the
highest mean test accuracy over the repetitions, ties resolved toward the
smallest hyperparameter tuple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import learn
from .errors import ConfigError, DataError
from .features import SUBSETS, FeatureMatrix, N_INPUT_COLUMNS, normalize_columns, subset_columns

REPETITIONS = 10
TRAIN_FRACTION = 0.8

NN_HIDDEN_GRID = tuple(range(1, 21))
SVM_DEGREE_GRID = tuple(range(1, 11))
SVM_GAMMA_GRID = tuple(range(1, 11))

# Best published accuracies for this protocol on the real 6-subject subset,
# kept as reference context for reports (keys are feature subsets).
REFERENCE_ACCURACY = {
    "NN": {"All": 88.9, "PX": 80.4, "MX": 68.5, "EX": 82.1,
           "PMX": 79.8, "MEX": 82.7, "PEX": 89.8},
    "SVM": {"All": 85.3, "PX": 88.2, "MX": 91.2, "EX": 94.1,
            "PMX": 80.6, "MEX": 82.4, "PEX": 97.1},
}


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    repetitions: int
    train_fraction: float
    train_indices: tuple[tuple[int, ...], ...]
    test_indices: tuple[tuple[int, ...], ...]


def make_splits(n_rows: int, seed: int, labels: np.ndarray | None = None,
                stratify: bool = True, repetitions: int = REPETITIONS,
                train_fraction: float = TRAIN_FRACTION) -> SplitPlan:
    """Independent shuffled train/test partitions, |train| = round(0.8 N)."""
    if n_rows < 5:
        raise DataError(f"need at least 5 rows to split, got {n_rows}")
    n_train = int(round(train_fraction * n_rows))
    if n_train in (0, n_rows):
        raise DataError(f"degenerate split: {n_train} of {n_rows} rows in train")
    rng = np.random.default_rng(seed)
    trains, tests = [], []
    for _ in range(repetitions):
        if stratify and labels is not None:
            train_idx: list[int] = []
            classes = np.unique(labels)
            # Largest class first; the last class absorbs the rounding
            # remainder so |train| is exact.
            counts = {c: int(np.sum(labels == c)) for c in classes}
            ordered = sorted(classes, key=lambda c: (-counts[c], c))
            remaining = n_train
            for pos, c in enumerate(ordered):
                members = np.flatnonzero(labels == c)
                members = members[rng.permutation(members.size)]
                take = (
                    remaining
                    if pos == len(ordered) - 1
                    else int(round(train_fraction * members.size))
                )
                take = max(0, min(take, members.size, remaining))
                train_idx.extend(int(i) for i in members[:take])
                remaining -= take
            train_set = set(train_idx)
            if len(train_set) != n_train:
                raise DataError("stratified split failed to hit the target size")
            test_idx = [i for i in range(n_rows) if i not in train_set]
            trains.append(tuple(sorted(train_idx)))
            tests.append(tuple(test_idx))
        else:
            perm = rng.permutation(n_rows)
            trains.append(tuple(sorted(int(i) for i in perm[:n_train])))
            tests.append(tuple(sorted(int(i) for i in perm[n_train:])))
    return SplitPlan(
        seed=seed,
        repetitions=repetitions,
        train_fraction=train_fraction,
        train_indices=tuple(trains),
        test_indices=tuple(tests),
    )


@dataclass
class GridEntry:
    subset: str
    classifier: str  # NN | SVM
    best_params: dict
    best_mean_accuracy: float
    per_repetition: list[float]
    dispersion: float
    grid_means: dict[str, float]
    failures: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "subset": self.subset,
            "classifier": self.classifier,
            "best_params": dict(self.best_params),
            "best_mean_accuracy": self.best_mean_accuracy,
            "per_repetition": list(self.per_repetition),
            "dispersion": self.dispersion,
            "grid_means": dict(self.grid_means),
            "failures": list(self.failures),
        }


@dataclass
class ResultTable:
    entries: list[GridEntry]
    normalization_mode: str
    seed: int
    stratified: bool

    def entry(self, subset: str, classifier: str) -> GridEntry:
        for e in self.entries:
            if e.subset == subset and e.classifier == classifier:
                return e
        raise KeyError((subset, classifier))

    def as_dict(self) -> dict:
        return {
            "normalization_mode": self.normalization_mode,
            "seed": self.seed,
            "stratified": self.stratified,
            "entries": [e.as_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ResultTable":
        entries = [
            GridEntry(
                subset=e["subset"],
                classifier=e["classifier"],
                best_params=dict(e["best_params"]),
                best_mean_accuracy=float(e["best_mean_accuracy"]),
                per_repetition=[float(v) for v in e["per_repetition"]],
                dispersion=float(e["dispersion"]),
                grid_means={k: float(v) for k, v in e["grid_means"].items()},
                failures=list(e.get("failures", ())),
            )
            for e in payload["entries"]
        ]
        return cls(
            entries=entries,
            normalization_mode=payload["normalization_mode"],
            seed=int(payload["seed"]),
            stratified=bool(payload["stratified"]),
        )


def _fold_data(matrix: FeatureMatrix, cols: list[int], splits: SplitPlan,
               normalization_mode: str):
    """Per-repetition (train_x, train_y, test_x, test_y) arrays.

    In ``full`` mode the matrix is normalized before splitting; ``train-only``
    fits the column ranges on each training fold and applies them to its
    test fold, which avoids leakage.
    """
    targets = matrix.targets()
    y = np.where(targets > 0.5, 1.0, -1.0)
    folds = []
    if normalization_mode == "full":
        normalized = matrix if matrix.normalization is not None else normalize_columns(matrix)
        inputs = normalized.inputs()
        for train, test in zip(splits.train_indices, splits.test_indices):
            tr, te = list(train), list(test)
            folds.append((inputs[tr][:, cols], y[tr], inputs[te][:, cols], y[te]))
    elif normalization_mode == "train-only":
        raw = matrix.inputs()
        for train, test in zip(splits.train_indices, splits.test_indices):
            tr, te = list(train), list(test)
            lo = raw[tr].min(axis=0)
            hi = raw[tr].max(axis=0)
            span = np.where(hi > lo, hi - lo, 1.0)
            def scale(block):
                out = 0.1 + 0.8 * (block - lo) / span
                out[:, hi == lo] = 0.5
                return out
            folds.append((scale(raw[tr])[:, cols], y[tr], scale(raw[te])[:, cols], y[te]))
    else:
        raise ConfigError(f"unknown normalization mode {normalization_mode!r}")
    return folds


def _accuracy(model, test_x, test_y) -> float:
    return float(np.mean(learn.predict_batch(model, test_x) == test_y) * 100.0)


def run_grid(matrix: FeatureMatrix, subset: str, classifier: str,
             splits: SplitPlan, normalization_mode: str = "full",
             nn_hidden_grid=NN_HIDDEN_GRID,
             svm_degree_grid=SVM_DEGREE_GRID, svm_gamma_grid=SVM_GAMMA_GRID,
             svm_c: float = learn.SVM_DEFAULT_C, nn_seed: int = 0,
             nn_learning_rate: float = learn.NN_DEFAULT_LRATE,
             nn_max_epochs: int = learn.NN_DEFAULT_EPOCHS) -> GridEntry:
    """Exhaustive grid search for one (subset, classifier) cell."""
    cols = subset_columns(subset)
    folds = _fold_data(matrix, cols, splits, normalization_mode)

    accuracies: dict[tuple, list[float]] = {}
    failures: list[str] = []
    if classifier == "NN":
        for hidden in nn_hidden_grid:
            per_rep = []
            for train_x, train_y, test_x, test_y in folds:
                targets = np.where(train_y > 0, learn.NN_TARGET_HI, learn.NN_TARGET_LO)
                try:
                    model = learn.train_nn(
                        train_x, targets, hidden_nodes=hidden,
                        learning_rate=nn_learning_rate,
                        max_epochs=nn_max_epochs, seed=nn_seed,
                    )
                except Exception as exc:  # recorded, grid continues
                    failures.append(f"hidden={hidden}: {exc}")
                    per_rep = None
                    break
                per_rep.append(_accuracy(model, test_x, test_y))
            if per_rep is not None:
                accuracies[(hidden,)] = per_rep
    elif classifier == "SVM":
        for gamma in svm_gamma_grid:
            # Kernel bases for one gamma are shared across degrees.
            bases = []
            for train_x, train_y, test_x, test_y in folds:
                diff = train_x[:, None, :] - train_x[None, :, :]
                base_train = np.exp(-gamma * diff * diff).sum(axis=2)
                diff_t = test_x[:, None, :] - train_x[None, :, :]
                base_test = np.exp(-gamma * diff_t * diff_t).sum(axis=2)
                bases.append((base_train, base_test, train_y, test_y))
            for degree in svm_degree_grid:
                per_rep = []
                for base_train, base_test, train_y, test_y in bases:
                    try:
                        alpha, bias, _, _ = learn.smo_solve(
                            base_train**degree, train_y, svm_c
                        )
                    except Exception as exc:
                        failures.append(f"degree={degree},gamma={gamma}: {exc}")
                        per_rep = None
                        break
                    decision = (base_test**degree) @ (alpha * train_y) + bias
                    pred = np.where(decision > 0, 1.0, -1.0)
                    per_rep.append(float(np.mean(pred == test_y) * 100.0))
                if per_rep is not None:
                    accuracies[(degree, gamma)] = per_rep
    else:
        raise ConfigError(f"unknown classifier {classifier!r} (expected NN or SVM)")

    if not accuracies:
        raise DataError(f"every grid point failed for {classifier} on {subset}")

    def mean_of(point):
        return float(np.mean(accuracies[point]))

    best = min(accuracies, key=lambda p: (-mean_of(p), p))
    if classifier == "NN":
        best_params = {"hidden": best[0]}
        grid_means = {str(p[0]): mean_of(p) for p in sorted(accuracies)}
    else:
        best_params = {"degree": best[0], "gamma": best[1]}
        grid_means = {f"{p[0]},{p[1]}": mean_of(p) for p in sorted(accuracies)}
    per_rep = accuracies[best]
    return GridEntry(
        subset=subset,
        classifier=classifier,
        best_params=best_params,
        best_mean_accuracy=mean_of(best),
        per_repetition=per_rep,
        dispersion=float(np.std(per_rep)),
        grid_means=grid_means,
        failures=failures,
    )


def run_experiments(matrix: FeatureMatrix, subsets=SUBSETS,
                    classifiers=("NN", "SVM"), seed: int = 7,
                    normalization_mode: str = "full", stratify: bool = True,
                    **grid_kwargs) -> ResultTable:
    """Full experiment sweep over feature subsets and classifiers."""
    targets = matrix.targets()
    splits = make_splits(matrix.n_rows, seed, labels=targets, stratify=stratify)
    entries = []
    for subset in subsets:
        for classifier in classifiers:
            entries.append(
                run_grid(
                    matrix, subset, classifier, splits,
                    normalization_mode=normalization_mode, **grid_kwargs,
                )
            )
    return ResultTable(
        entries=entries,
        normalization_mode=normalization_mode,
        seed=seed,
        stratified=stratify,
    )


# ---------------------------------------------------------------------------
# reports


def report_text(table: ResultTable, include_reference: bool = True) -> str:
    """Human-readable summary table, one row per feature subset."""
    lines = []
    lines.append("Left/right fist movement classification: repeated 80/20 evaluation")
    lines.append(f"splits: {REPETITIONS} repetitions, seed {table.seed}, "
                 f"{'stratified' if table.stratified else 'unstratified'}")
    lines.append(f"normalization: {table.normalization_mode}"
                 + ("  (columns scaled on the full matrix before splitting;"
                    " test rows influence the ranges)"
                    if table.normalization_mode == "full" else ""))
    lines.append("")
    header = (f"{'Features':<8} | {'NN acc %':>8} {'hidden':>6} | "
              f"{'SVM acc %':>9} {'degree':>6} {'gamma':>5}")
    if include_reference:
        header += " | ref NN/SVM %"
    lines.append(header)
    lines.append("-" * len(header))
    subsets_in_table = []
    for e in table.entries:
        if e.subset not in subsets_in_table:
            subsets_in_table.append(e.subset)
    for subset in subsets_in_table:
        nn = svm = None
        for e in table.entries:
            if e.subset == subset:
                if e.classifier == "NN":
                    nn = e
                elif e.classifier == "SVM":
                    svm = e
        nn_cell = (f"{nn.best_mean_accuracy:8.1f} {nn.best_params['hidden']:6d}"
                   if nn else f"{'-':>8} {'-':>6}")
        svm_cell = (f"{svm.best_mean_accuracy:9.1f} {svm.best_params['degree']:6d} "
                    f"{svm.best_params['gamma']:5d}"
                    if svm else f"{'-':>9} {'-':>6} {'-':>5}")
        row = f"{subset:<8} | {nn_cell} | {svm_cell}"
        if include_reference:
            ref_nn = REFERENCE_ACCURACY["NN"].get(subset)
            ref_svm = REFERENCE_ACCURACY["SVM"].get(subset)
            row += f" | {ref_nn if ref_nn is not None else '-'}/{ref_svm if ref_svm is not None else '-'}"
        lines.append(row)
    failures = [f for e in table.entries for f in e.failures]
    if failures:
        lines.append("")
        lines.append(f"grid failures ({len(failures)}):")
        lines.extend(f"  {f}" for f in failures)
    return "\n".join(lines) + "\n"


def report_json(table: ResultTable) -> str:
    """Machine-readable form; parses back via ResultTable.from_dict."""
    return json.dumps(table.as_dict(), indent=2, sort_keys=True) + "\n"


def report_summary_csv(table: ResultTable) -> str:
    lines = ["subset,classifier,mean_accuracy,best_params,dispersion"]
    for e in table.entries:
        params = ";".join(f"{k}={v}" for k, v in sorted(e.best_params.items()))
        lines.append(
            f"{e.subset},{e.classifier},{e.best_mean_accuracy:.6f},{params},{e.dispersion:.6f}"
        )
    return "\n".join(lines) + "\n"


def repetitions_csv(table: ResultTable) -> str:
    lines = ["subset,classifier,repetition,accuracy"]
    for e in table.entries:
        for rep, acc in enumerate(e.per_repetition):
            lines.append(f"{e.subset},{e.classifier},{rep},{acc:.6f}")
    return "\n".join(lines) + "\n"
