"""Empirical field evaluation, accumulators, replication covariance."""

import math

import numpy as np
import pytest

from weplab.engine import (MomentAccumulator, accumulate_cell_moments,
                           covariance_from_moments, empirical_covariance,
                           evaluate_field, evaluate_field_streaming, export_field_csv,
                           sup_statistic)
from weplab.errors import DomainError
from weplab.models import PathBatch, TimeGrid, parse_model, sample_paths
from weplab.weights import parse_weight

PINNED_SEED = 20260810

w_const = parse_weight("const:1")
w_two = parse_weight("const:2")


def single_path_batch(value: float) -> PathBatch:
    grid = TimeGrid.uniform(1, 2, 3)
    return PathBatch(parse_model("dependent"), grid, 1, 7, np.full((1, 3), value))


class TestEvaluateField:
    def test_single_path_closed_form(self):
        batch = single_path_batch(0.4)
        field = evaluate_field(batch, [0.5], w_const)
        assert field.values[0, 0] == pytest.approx(0.5, abs=1e-15)
        field = evaluate_field(batch, [0.3], w_const)
        assert field.values[0, 0] == pytest.approx(-0.3, abs=1e-15)

    def test_weight_linearity_exact(self):
        batch = sample_paths(parse_model("bm-copula"), TimeGrid.uniform(1, 2, 9), 500, 3)
        levels = [0.2, 0.5, 0.8]
        base = evaluate_field(batch, levels, w_const)
        doubled = evaluate_field(batch, levels, w_two)
        assert np.array_equal(doubled.values, 2.0 * base.values)

    def test_clip_enforced(self):
        batch = single_path_batch(0.4)
        with pytest.raises(DomainError):
            evaluate_field(batch, [1e-5], w_const, clip=1e-3)

    def test_boundary_magnitude_bound(self):
        batch = sample_paths(parse_model("iid-time"), TimeGrid.uniform(1, 2, 5), 2000, 5)
        clip = 1e-3
        field = evaluate_field(batch, [clip, 1.0 - clip], w_const, clip=clip)
        for j, y in enumerate([clip, 1.0 - clip]):
            cap = math.sqrt(batch.n) * max(y, 1.0 - y)
            assert np.all(np.abs(field.values[:, j]) <= cap + 1e-12)

    def test_streaming_matches_batch(self):
        model = parse_model("bm-copula")
        grid = TimeGrid.uniform(1, 2, 17)
        levels = [0.2, 0.5, 0.8]
        batch = sample_paths(model, grid, 3000, 11)
        a = evaluate_field(batch, levels, w_const)
        b = evaluate_field_streaming(model, grid, levels, w_const, 3000, 11)
        assert np.array_equal(a.values, b.values)

    def test_partition_invariance_bit_for_bit(self):
        model = parse_model("bm-copula")
        grid = TimeGrid.uniform(1, 2, 17)
        levels = [0.3, 0.6]
        one = evaluate_field_streaming(model, grid, levels, w_const, 10_000, 5, workers=1)
        eight = evaluate_field_streaming(model, grid, levels, w_const, 10_000, 5, workers=8)
        assert np.array_equal(one.values, eight.values)

    def test_replication_mean_and_variance(self):
        model = parse_model("bm-copula")
        grid = TimeGrid(np.array([1.5]))
        reps, n = 200, 2000
        vals = np.empty(reps)
        for r in range(reps):
            f = evaluate_field_streaming(model, grid, [0.3], w_const, n, PINNED_SEED,
                                         extra_key=(r,))
            vals[r] = f.values[0, 0]
        se = np.std(vals, ddof=1) / math.sqrt(reps)
        assert abs(np.mean(vals)) <= 4 * se
        assert np.var(vals, ddof=1) == pytest.approx(0.21, abs=0.05)


class TestSupStatistic:
    def test_zero_field(self):
        batch = single_path_batch(0.4)
        field = evaluate_field(batch, [0.5], w_const)
        zeroed = type(field)(field.grid, field.levels, np.zeros_like(field.values),
                             field.n, field.weight, field.provenance)
        assert sup_statistic(zeroed) == 0.0

    def test_single_cell(self):
        field = evaluate_field(single_path_batch(0.4), [0.5], w_const)
        assert sup_statistic(field) == pytest.approx(0.5, abs=1e-15)


class TestMomentAccumulator:
    def test_merge_exact_and_commutative(self):
        rng = np.random.default_rng(1)
        a = MomentAccumulator.from_indicators(rng.random((100, 4)) < 0.5, True)
        b = MomentAccumulator.from_indicators(rng.random((37, 4)) < 0.5, True)
        ab = a.merge(b)
        ba = b.merge(a)
        assert ab.count == ba.count == 137
        assert np.array_equal(ab.cell_counts, ba.cell_counts)
        assert np.array_equal(ab.pair_counts, ba.pair_counts)

    def test_pair_counts_match_brute_force(self):
        rng = np.random.default_rng(2)
        ind = rng.random((50, 3)) < 0.4
        acc = MomentAccumulator.from_indicators(ind, True)
        brute = np.zeros((3, 3), dtype=np.int64)
        for row in ind:
            brute += np.outer(row, row).astype(np.int64)
        assert np.array_equal(acc.pair_counts, brute)

    def test_accumulate_worker_invariance(self):
        model = parse_model("bm-copula")
        grid = TimeGrid(np.array([1.0, 2.0]))
        cells = [(1.0, 0.5), (2.0, 0.5)]
        a = accumulate_cell_moments(model, cells, grid, 20_000, 9, workers=1)
        b = accumulate_cell_moments(model, cells, grid, 20_000, 9, workers=8)
        assert np.array_equal(a.pair_counts, b.pair_counts)

    def test_covariance_from_moments_target(self):
        model = parse_model("bm-copula")
        grid = TimeGrid(np.array([1.0, 2.0]))
        cells = [(1.0, 0.5), (2.0, 0.5)]
        acc = accumulate_cell_moments(model, cells, grid, 200_000, PINNED_SEED)
        cov = covariance_from_moments(acc, cells, w_const)
        assert cov[0, 1] == pytest.approx(0.125, abs=0.005)
        assert cov[0, 0] == pytest.approx(0.25, abs=0.005)


class TestEmpiricalCovariance:
    def _replicated(self, model_spec, cells, reps, n, seed):
        model = parse_model(model_spec)
        times = sorted({t for t, _ in cells})
        grid = TimeGrid(np.array(times))
        out = np.empty((reps, len(cells)))
        for r in range(reps):
            vals = []
            for (t, y) in cells:
                f = evaluate_field_streaming(model, grid, [y], parse_weight("const:1"),
                                             n, seed, extra_key=(r,))
                vals.append(f.values[grid.index_of(t), 0])
            out[r] = vals
        return out

    def test_comonotone_offdiagonal(self):
        cells = [(1.5, 0.2), (1.5, 0.4)]
        vals = self._replicated("dependent", cells, 200, 500, PINNED_SEED)
        cov, se = empirical_covariance(vals)
        assert abs(cov[0, 1] - 0.12) <= 4 * se[0, 1]

    def test_iid_cross_time_zero(self):
        cells = [(1.0, 0.3), (2.0, 0.3)]
        vals = self._replicated("iid-time", cells, 200, 500, PINNED_SEED)
        cov, se = empirical_covariance(vals)
        assert abs(cov[0, 1]) <= 4 * se[0, 1]

    def test_bm_cross_time_sheppard(self):
        cells = [(1.0, 0.5), (2.0, 0.5)]
        vals = self._replicated("bm-copula", cells, 300, 500, PINNED_SEED)
        cov, se = empirical_covariance(vals)
        assert abs(cov[0, 1] - 0.125) <= 4 * se[0, 1]

    def test_requires_replications(self):
        with pytest.raises(DomainError):
            empirical_covariance(np.zeros((10, 3)))


class TestFieldCsv:
    def test_header_and_rows(self, tmp_path):
        batch = sample_paths(parse_model("dependent"), TimeGrid.uniform(1, 2, 3), 10, 7)
        field = evaluate_field(batch, [0.3, 0.5], w_const)
        path = tmp_path / "field.csv"
        export_field_csv(field, str(path))
        text = path.read_text(encoding="utf-8")
        lines = text.strip().split("\n")
        assert lines[0] == "# weplab field v1"
        assert "model=dependent" in lines[1]
        assert lines[2] == "t,y,nu"
        assert len(lines) == 3 + 3 * 2
        assert "\r" not in text
