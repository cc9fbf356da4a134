import numpy as np
import pytest

from motordecode import evaluate as ev
from motordecode import features as feat
from motordecode import synth
from motordecode.edf import Side
from motordecode.errors import ConfigError, DataError


def toy_matrix(n_rows=40, separation=0.5, seed=0):
    """Small labeled matrix with controllable class separation."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.2, 0.8, (n_rows, 26))
    labels = np.tile([0.0, 1.0], n_rows // 2)
    values[:, -1] = labels
    values[:, 0] = 0.5 + separation * (labels - 0.5) + rng.normal(0, 0.05, n_rows)
    values[:, 24] = np.tile([1.0, 2.0], n_rows // 2)  # type codes
    keys = [("Y001", i // 6 + 1, ("ERD", "ERS", "MRCP")[i % 3],
             ("Left", "Right")[i % 2], 100 + i) for i in range(n_rows)]
    return feat.FeatureMatrix(values=values, row_keys=keys,
                              normalization=[(0.0, 1.0)] * 25)


class TestSplits:
    def test_sizes_108(self):
        plan = ev.make_splits(108, seed=7)
        for train, test in zip(plan.train_indices, plan.test_indices):
            assert len(train) == 86
            assert len(test) == 22
            assert set(train) | set(test) == set(range(108))
            assert not set(train) & set(test)

    def test_sizes_10(self):
        plan = ev.make_splits(10, seed=1)
        assert all(len(t) == 8 for t in plan.train_indices)
        assert all(len(t) == 2 for t in plan.test_indices)

    def test_deterministic(self):
        a = ev.make_splits(50, seed=3)
        b = ev.make_splits(50, seed=3)
        assert a.train_indices == b.train_indices
        c = ev.make_splits(50, seed=4)
        assert a.train_indices != c.train_indices

    def test_repetitions_differ(self):
        plan = ev.make_splits(60, seed=5)
        assert len(set(plan.train_indices)) > 1

    def test_stratified_preserves_balance(self):
        labels = np.array([0.0] * 54 + [1.0] * 54)
        plan = ev.make_splits(108, seed=7, labels=labels, stratify=True)
        for train in plan.train_indices:
            picked = labels[list(train)]
            assert abs((picked == 0).sum() - (picked == 1).sum()) <= 1

    def test_unstratified_mode(self):
        labels = np.array([0.0] * 54 + [1.0] * 54)
        plan = ev.make_splits(108, seed=7, labels=labels, stratify=False)
        assert all(len(t) == 86 for t in plan.train_indices)

    def test_too_small_rejected(self):
        with pytest.raises(DataError):
            ev.make_splits(4, seed=0)


class TestRunGrid:
    def test_separable_matrix_scores_high(self):
        matrix = toy_matrix(separation=0.5)
        splits = ev.make_splits(matrix.n_rows, seed=2, labels=matrix.targets())
        entry = ev.run_grid(matrix, "PX", "SVM", splits,
                            svm_degree_grid=(1, 2), svm_gamma_grid=(1, 4))
        assert entry.best_mean_accuracy >= 90.0
        assert set(entry.best_params) == {"degree", "gamma"}
        assert len(entry.per_repetition) == 10

    def test_nn_grid(self):
        matrix = toy_matrix(separation=0.5)
        splits = ev.make_splits(matrix.n_rows, seed=2, labels=matrix.targets())
        entry = ev.run_grid(matrix, "PX", "NN", splits, nn_hidden_grid=(2, 4))
        assert entry.best_mean_accuracy >= 85.0
        assert entry.best_params["hidden"] in (2, 4)

    def test_mean_within_repetition_range(self):
        matrix = toy_matrix(separation=0.3, seed=5)
        splits = ev.make_splits(matrix.n_rows, seed=3, labels=matrix.targets())
        entry = ev.run_grid(matrix, "All", "SVM", splits,
                            svm_degree_grid=(1,), svm_gamma_grid=(2,))
        reps = entry.per_repetition
        assert min(reps) <= entry.best_mean_accuracy <= max(reps)

    def test_degenerate_split_train_equals_test(self):
        matrix = toy_matrix(separation=0.5)
        rows = tuple(range(matrix.n_rows))
        splits = ev.SplitPlan(
            seed=0, repetitions=1, train_fraction=1.0,
            train_indices=(rows,), test_indices=(rows,),
        )
        entry = ev.run_grid(matrix, "PX", "SVM", splits,
                            svm_degree_grid=(2,), svm_gamma_grid=(4,))
        # train == test: reported accuracy is the training accuracy
        assert entry.best_mean_accuracy >= 95.0

    def test_grid_exhaustive(self):
        matrix = toy_matrix()
        splits = ev.make_splits(matrix.n_rows, seed=2, labels=matrix.targets())
        entry = ev.run_grid(matrix, "PX", "SVM", splits,
                            svm_degree_grid=(1, 2, 3), svm_gamma_grid=(1, 2))
        assert len(entry.grid_means) == 6

    def test_tie_break_smallest_params(self):
        matrix = toy_matrix(separation=0.9, seed=1)  # everything separates
        splits = ev.make_splits(matrix.n_rows, seed=2, labels=matrix.targets())
        entry = ev.run_grid(matrix, "PX", "SVM", splits,
                            svm_degree_grid=(1, 2), svm_gamma_grid=(1, 2))
        best = max(entry.grid_means.values())
        winners = [k for k, v in entry.grid_means.items() if v == best]
        assert f"{entry.best_params['degree']},{entry.best_params['gamma']}" == min(
            winners, key=lambda s: tuple(int(v) for v in s.split(","))
        )

    def test_unknown_classifier(self):
        matrix = toy_matrix()
        splits = ev.make_splits(matrix.n_rows, seed=2)
        with pytest.raises(ConfigError):
            ev.run_grid(matrix, "PX", "LDA", splits)

    def test_label_shuffle_control(self):
        matrix = toy_matrix(separation=0.5, seed=8)
        rng = np.random.default_rng(0)
        shuffled = feat.FeatureMatrix(
            values=matrix.values.copy(), row_keys=list(matrix.row_keys),
            normalization=matrix.normalization,
        )
        shuffled.values[:, -1] = rng.permutation(shuffled.values[:, -1])
        splits = ev.make_splits(shuffled.n_rows, seed=3, labels=shuffled.targets())
        entry = ev.run_grid(shuffled, "PX", "SVM", splits,
                            svm_degree_grid=(1, 2), svm_gamma_grid=(1, 4))
        assert 30.0 <= entry.best_mean_accuracy <= 70.0


class TestReports:
    def table(self):
        matrix = toy_matrix(separation=0.5)
        splits = ev.make_splits(matrix.n_rows, seed=2, labels=matrix.targets())
        entries = [
            ev.run_grid(matrix, subset, clf, splits,
                        svm_degree_grid=(1, 2), svm_gamma_grid=(1,),
                        nn_hidden_grid=(2,), nn_max_epochs=150)
            for subset in ("All", "PX")
            for clf in ("NN", "SVM")
        ]
        return ev.ResultTable(entries=entries, normalization_mode="full",
                              seed=2, stratified=True)

    def test_text_report_row_order(self):
        table = self.table()
        text = ev.report_text(table)
        all_pos = text.index("All")
        px_pos = text.index("PX")
        assert all_pos < px_pos
        assert "normalization: full" in text

    def test_json_roundtrip(self):
        table = self.table()
        payload = ev.report_json(table)
        import json

        parsed = ev.ResultTable.from_dict(json.loads(payload))
        assert parsed.seed == table.seed
        assert len(parsed.entries) == len(table.entries)
        for a, b in zip(parsed.entries, table.entries):
            assert a.subset == b.subset
            assert a.best_params == b.best_params
            assert a.per_repetition == b.per_repetition
        assert ev.report_json(parsed) == payload

    def test_csv_outputs(self):
        table = self.table()
        summary = ev.report_summary_csv(table)
        assert summary.startswith("subset,classifier,")
        assert len(summary.strip().split("\n")) == 5
        reps = ev.repetitions_csv(table)
        assert len(reps.strip().split("\n")) == 1 + 4 * 10

    def test_full_subset_order(self):
        assert feat.SUBSETS == ("All", "PX", "MX", "EX", "PMX", "MEX", "PEX")


class TestSynth:
    def test_deterministic(self):
        spec = synth.SynthSpec(n_subjects=1, n_runs=1, events_per_run=4, seed=9)
        a = synth.synth_generate(spec)
        b = synth.synth_generate(spec)
        assert len(a) == len(b) == 1
        assert np.array_equal(a[0].data, b[0].data)
        assert a[0].events == b[0].events

    def test_seed_changes_records(self):
        base = synth.SynthSpec(n_subjects=1, n_runs=1, events_per_run=4, seed=9)
        other = synth.SynthSpec(n_subjects=1, n_runs=1, events_per_run=4, seed=10)
        assert not np.array_equal(
            synth.synth_generate(base)[0].data,
            synth.synth_generate(other)[0].data,
        )

    def test_record_structure(self):
        spec = synth.SynthSpec(n_subjects=2, n_runs=3, events_per_run=6, seed=1)
        records = synth.synth_generate(spec)
        assert len(records) == 6
        rec = records[0]
        assert rec.labels == list(("FC3", "FCZ", "FC4", "C3", "C1", "CZ", "C2", "C4"))
        assert len(rec.events) == 6
        sides = {e.side for e in rec.events}
        assert sides == {Side.LEFT, Side.RIGHT}
        assert rec.fs == spec.fs

    def test_events_fit_record(self):
        spec = synth.SynthSpec(n_subjects=1, n_runs=1, events_per_run=10, seed=3)
        rec = synth.synth_generate(spec)[0]
        for event in rec.events:
            assert event.onset_s - 2.0 >= 0
            assert event.onset_s + 5.1 <= rec.duration_s

    def test_depth_zero_sides_statistically_identical(self):
        # same seed, depth 0: left and right cue windows should have
        # indistinguishable contralateral band power on average
        spec = synth.SynthSpec(n_subjects=2, n_runs=2, events_per_run=12,
                               erd_depth=0.0, seed=5)
        ratios = []
        for rec in synth.synth_generate(spec):
            c3 = rec.data[3]
            for event in rec.events:
                lo = int((event.onset_s - 2.0) * rec.fs)
                hi = int(event.onset_s * rec.fs)
                power = np.mean(c3[lo:hi] ** 2)
                ratios.append((power, event.side))
        left = np.mean([p for p, s in ratios if s is Side.LEFT])
        right = np.mean([p for p, s in ratios if s is Side.RIGHT])
        assert 0.7 <= left / right <= 1.4

    def test_depth_rejected_out_of_range(self):
        with pytest.raises(ConfigError):
            synth.SynthSpec(erd_depth=1.0)

    def test_erd_suppression_present_at_depth(self):
        spec = synth.SynthSpec(n_subjects=1, n_runs=1, events_per_run=12,
                               erd_depth=0.8, noise_level=0.5, seed=2)
        rec = synth.synth_generate(spec)[0]
        c3 = rec.data[3]  # left-hemisphere mu generator
        fs = rec.fs

        def mu_power(window):
            spectrum = np.abs(np.fft.rfft(window * np.hanning(window.size))) ** 2
            freqs = np.fft.rfftfreq(window.size, 1 / fs)
            return spectrum[(freqs > 8.0) & (freqs < 13.0)].sum()

        pre, rest = [], []
        for event in rec.events:
            lo = int((event.onset_s - 2.0) * fs)
            hi = int(event.onset_s * fs)
            power = mu_power(c3[lo:hi])
            if event.side is Side.RIGHT:  # contralateral to C3
                pre.append(power)
            else:
                rest.append(power)
        assert np.mean(pre) < 0.75 * np.mean(rest)
