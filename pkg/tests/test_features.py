import numpy as np
import pytest

from motordecode import features as feat
from motordecode.edf import Side
from motordecode.errors import DataError


def loop_stats(acts):
    """Brute-force elementwise oracle for the activation statistics."""
    n_comp, n_samples = acts.shape
    mean = np.zeros(n_comp)
    energy = np.zeros(n_comp)
    for i in range(n_comp):
        total = 0.0
        square = 0.0
        for t in range(n_samples):
            total += acts[i, t]
            square += acts[i, t] * acts[i, t]
        mean[i] = total / n_samples
        energy[i] = square
    return mean, energy / n_samples, energy


def make_vector(subject="Y001", run=1, analysis="ERD", side=Side.LEFT, seed=0,
                n_samples=50):
    rng = np.random.default_rng(seed)
    acts = rng.uniform(-1, 1, (8, n_samples))
    mean, power, energy = feat.compute_stats(acts)
    code = {"ERD": 1, "ERS": 2, "MRCP": 3}[analysis]
    return feat.FeatureVector(
        subject=subject, run=run, analysis=analysis, analysis_code=code,
        side=side, mean=tuple(mean), power=tuple(power), energy=tuple(energy),
        n_samples=n_samples,
    )


class TestComputeStats:
    def test_constant_row_closed_form(self):
        acts = np.full((8, 40), 0.0)
        acts[2] = 3.0
        mean, power, energy = feat.compute_stats(acts)
        assert mean[2] == 3.0
        assert power[2] == 9.0
        assert energy[2] == 40 * 9.0
        assert mean[0] == power[0] == energy[0] == 0.0

    def test_all_zero(self):
        mean, power, energy = feat.compute_stats(np.zeros((8, 10)))
        assert not mean.any() and not power.any() and not energy.any()

    def test_matches_loop_oracle(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            acts = rng.uniform(-5, 5, (8, 50))
            mean, power, energy = feat.compute_stats(acts)
            ref_mean, ref_power, ref_energy = loop_stats(acts)
            for got, ref in ((mean, ref_mean), (power, ref_power), (energy, ref_energy)):
                scale = np.maximum(np.abs(ref), 1e-300)
                assert np.max(np.abs(got - ref) / scale) <= 1e-12

    def test_power_energy_identity(self):
        rng = np.random.default_rng(3)
        acts = rng.normal(size=(8, 123))
        _, power, energy = feat.compute_stats(acts)
        assert np.max(np.abs(power * 123 - energy) / np.abs(energy)) <= 1e-9

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            feat.compute_stats(np.zeros((8, 0)))


class TestAssemble:
    def full_set(self, subjects=2, runs=(1, 2, 3)):
        vectors = []
        seed = 0
        for s in range(1, subjects + 1):
            for r in runs:
                for analysis in ("ERD", "ERS", "MRCP"):
                    for side in (Side.LEFT, Side.RIGHT):
                        vectors.append(make_vector(
                            f"Y{s:03d}", r, analysis, side, seed=seed))
                        seed += 1
        return vectors

    def test_shape_paper_subset(self):
        vectors = self.full_set(subjects=6)
        matrix = feat.assemble_matrix(vectors)
        assert matrix.values.shape == (108, 26)
        assert matrix.column_names[-1] == "side"
        assert matrix.column_names[24] == "type"

    def test_single_run_both_sides(self):
        vectors = self.full_set(subjects=1, runs=(1,))
        matrix = feat.assemble_matrix(vectors)
        assert matrix.values.shape == (6, 26)

    def test_row_order_deterministic(self):
        vectors = self.full_set(subjects=2)
        import random

        shuffled = list(vectors)
        random.Random(1).shuffle(shuffled)
        a = feat.assemble_matrix(vectors)
        b = feat.assemble_matrix(shuffled)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.row_keys == b.row_keys

    def test_duplicate_key_rejected(self):
        v = make_vector()
        with pytest.raises(DataError):
            feat.assemble_matrix([v, make_vector(seed=9)])

    def test_side_and_type_encoding(self):
        vectors = self.full_set(subjects=1, runs=(1,))
        matrix = feat.assemble_matrix(vectors)
        assert set(matrix.values[:, 24]) == {1.0, 2.0, 3.0}
        assert set(matrix.values[:, 25]) == {0.0, 1.0}


class TestNormalize:
    def test_linear_map_endpoints(self):
        vectors = [make_vector(run=r, seed=r) for r in range(1, 4)]
        matrix = feat.assemble_matrix(vectors)
        matrix.values[:, 0] = [0.0, 5.0, 10.0]
        out = feat.normalize_columns(matrix)
        np.testing.assert_allclose(out.values[:, 0], [0.1, 0.5, 0.9])

    def test_constant_column_maps_to_midpoint(self):
        vectors = [make_vector(run=r, seed=r) for r in range(1, 4)]
        matrix = feat.assemble_matrix(vectors)
        matrix.values[:, 5] = 7.7
        out = feat.normalize_columns(matrix)
        assert np.all(out.values[:, 5] == 0.5)

    def test_bounds_attained_on_random_blocks(self):
        rng = np.random.default_rng(0)
        vectors = [make_vector(run=r, seed=100 + r) for r in range(1, 30)]
        matrix = feat.assemble_matrix(vectors)
        matrix.values[:, :25] = rng.normal(size=(len(vectors), 25)) * 100
        out = feat.normalize_columns(matrix)
        for col in range(25):
            column = out.values[:, col]
            assert abs(column.min() - 0.1) <= 1e-12
            assert abs(column.max() - 0.9) <= 1e-12

    def test_target_column_untouched(self):
        vectors = [make_vector(run=r, side=s, seed=r * 2 + (s is Side.LEFT))
                   for r in range(1, 4) for s in (Side.LEFT, Side.RIGHT)]
        matrix = feat.assemble_matrix(vectors)
        out = feat.normalize_columns(matrix)
        np.testing.assert_array_equal(out.values[:, -1], matrix.values[:, -1])

    def test_idempotent_with_stored_bounds(self):
        vectors = [make_vector(run=r, seed=r) for r in range(1, 6)]
        matrix = feat.assemble_matrix(vectors)
        once = feat.normalize_columns(matrix)
        twice = feat.normalize_columns(once, bounds=[(0.1, 0.9)] * 25)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)

    def test_monotone_on_nonconstant_columns(self):
        vectors = [make_vector(run=r, seed=r) for r in range(1, 8)]
        matrix = feat.assemble_matrix(vectors)
        out = feat.normalize_columns(matrix)
        for col in range(25):
            order_in = np.argsort(matrix.values[:, col], kind="stable")
            order_out = np.argsort(out.values[:, col], kind="stable")
            np.testing.assert_array_equal(order_in, order_out)

    def test_stored_bounds_reusable_on_held_out_rows(self):
        vectors = [make_vector(run=r, seed=r) for r in range(1, 6)]
        matrix = feat.assemble_matrix(vectors)
        normalized = feat.normalize_columns(matrix)
        held = feat.assemble_matrix([make_vector(run=9, seed=99)])
        mapped = feat.normalize_columns(held, bounds=normalized.normalization)
        # same linear map applied out of sample: recompute by hand
        lo, hi = normalized.normalization[0]
        expected = 0.1 + 0.8 * (held.values[0, 0] - lo) / (hi - lo)
        assert mapped.values[0, 0] == pytest.approx(expected)


class TestSubsets:
    def test_all(self):
        assert feat.subset_columns("All") == list(range(25))

    def test_px(self):
        assert feat.subset_columns("PX") == list(range(8)) + [24]

    def test_pex(self):
        cols = feat.subset_columns("PEX")
        assert cols == list(range(8)) + list(range(16, 24)) + [24]

    def test_case_insensitive(self):
        assert feat.subset_columns("pex") == feat.subset_columns("PEX")

    def test_unknown_rejected(self):
        with pytest.raises(DataError):
            feat.subset_columns("QX")


def test_csv_roundtrip_values():
    vectors = [make_vector(run=r, seed=r) for r in range(1, 4)]
    matrix = feat.assemble_matrix(vectors)
    text = feat.to_csv(matrix)
    lines = text.strip().split("\n")
    assert lines[0].split(",") == list(feat.COLUMN_NAMES)
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    np.testing.assert_array_equal(parsed, matrix.values)
    rows = feat.rows_csv(matrix).strip().split("\n")
    assert rows[0] == "subject,run,analysis,side,n_samples"
    assert len(rows) == matrix.n_rows + 1
