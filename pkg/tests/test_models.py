"""Process models: marginals, joint CDFs, determinism, envelope statistics."""

import math

import numpy as np
import pytest

from weplab.errors import DomainError, UnsupportedModelError
from weplab.models import (TimeGrid, envelope_statistics, joint_cdf, parse_model,
                           rho_metric, sample_paths)
from weplab.numerics import ks_statistic_one_sample

PINNED_SEED = 20260810

uniform_cdf = lambda u: np.clip(u, 0.0, 1.0)


class TestTimeGrid:
    def test_uniform_default(self):
        g = TimeGrid.uniform()
        assert g.a == 1.0 and g.b == 2.0 and len(g) == 129

    def test_requires_positive_start(self):
        with pytest.raises(DomainError):
            TimeGrid(np.array([0.0, 1.0]))
        with pytest.raises(DomainError):
            TimeGrid(np.array([1.0, 1.0]))

    def test_refined_doubles_density(self):
        g = TimeGrid.uniform(1, 2, 9)
        r = g.refined()
        assert len(r) == 17
        assert r.a == g.a and r.b == g.b
        assert set(np.round(g.points, 12)).issubset(set(np.round(r.points, 12)))

    def test_index_and_ball(self):
        g = TimeGrid.uniform(1, 2, 129)
        assert g.index_of(1.5) == 64
        ball = g.ball_indices(1.5, 2.5 / 128)
        assert list(ball) == [62, 63, 64, 65, 66]
        with pytest.raises(DomainError):
            g.index_of(1.5001)


class TestModelParsing:
    def test_kinds(self):
        assert parse_model("bm-copula").kind == "bm-copula"
        assert parse_model("DEPENDENT").kind == "dependent"
        m = parse_model("atomic:0.3@0.6")
        assert m.atom_mass == 0.3 and m.atom_loc == 0.6

    def test_rejects_garbage(self):
        for bad in ("", "bm", "atomic:", "atomic:2@0.5"):
            with pytest.raises(DomainError):
                parse_model(bad)


class TestSampling:
    @pytest.mark.parametrize("spec", ["bm-copula", "dependent", "iid-time",
                                      "atomic:0.5@0.5"])
    def test_marginal_uniformity(self, spec):
        grid = TimeGrid.uniform(1, 2, 17)
        batch = sample_paths(parse_model(spec), grid, 100_000, PINNED_SEED)
        for col in (0, 8, 16):
            d = ks_statistic_one_sample(batch.values[:, col], uniform_cdf)
            assert d < 1.63 / math.sqrt(batch.n), (spec, col, d)

    def test_values_strictly_inside_unit_interval(self):
        grid = TimeGrid.uniform(1, 2, 9)
        batch = sample_paths(parse_model("bm-copula"), grid, 20_000, 3)
        assert np.all(batch.values > 0.0)
        assert np.all(batch.values < 1.0)

    def test_dependent_constant_in_time(self):
        batch = sample_paths(parse_model("dependent"), TimeGrid.uniform(1, 2, 9), 100, 7)
        assert np.all(batch.values == batch.values[:, :1])

    def test_worker_partition_invariance(self):
        grid = TimeGrid.uniform(1, 2, 33)
        for spec in ("bm-copula", "iid-time", "atomic:0.5@0.5"):
            one = sample_paths(parse_model(spec), grid, 10_000, 11, workers=1)
            eight = sample_paths(parse_model(spec), grid, 10_000, 11, workers=8)
            assert np.array_equal(one.values, eight.values), spec

    def test_deterministic_across_runs(self):
        grid = TimeGrid.uniform(1, 2, 9)
        a = sample_paths(parse_model("bm-copula"), grid, 5000, 5)
        b = sample_paths(parse_model("bm-copula"), grid, 5000, 5)
        assert np.array_equal(a.values, b.values)

    def test_needs_paths(self):
        with pytest.raises(DomainError):
            sample_paths(parse_model("dependent"), TimeGrid.uniform(), 0, 1)

    def test_bm_copula_is_transformed_brownian(self):
        # path values are exactly the normal cdf of the scaled Brownian path
        from weplab.models import map_brownian_blocks
        from weplab.numerics import std_normal_cdf
        grid = TimeGrid.uniform(1, 2, 9)
        batch = sample_paths(parse_model("bm-copula"), grid, 3000, 13)
        blocks = map_brownian_blocks(grid, 3000, 13, lambda b: b)
        b = np.vstack(blocks)
        x = np.clip(std_normal_cdf(b / np.sqrt(grid.points)), 5e-324,
                    np.nextafter(1.0, 0.0))
        assert np.array_equal(batch.values, x)


class TestJointCdf:
    def test_equal_times_comonotone(self):
        m = parse_model("bm-copula")
        assert joint_cdf(m, 1.5, 1.5, 0.3, 0.7) == 0.3

    def test_wide_grid_sheppard(self):
        m = parse_model("bm-copula")
        assert joint_cdf(m, 1.0, 4.0, 0.5, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_dependent_and_iid(self):
        assert joint_cdf(parse_model("dependent"), 1.0, 1.5, 0.2, 0.4) == 0.2
        assert joint_cdf(parse_model("iid-time"), 1.0, 1.5, 0.2, 0.4) == pytest.approx(0.08)

    def test_exchange_symmetry(self):
        m = parse_model("bm-copula")
        for (s, t, x, y) in [(1.0, 1.7, 0.2, 0.6), (1.2, 1.9, 0.8, 0.3)]:
            assert joint_cdf(m, s, t, x, y) == pytest.approx(
                joint_cdf(m, t, s, y, x), abs=1e-14)

    def test_atomic_unsupported(self):
        with pytest.raises(UnsupportedModelError):
            joint_cdf(parse_model("atomic:0.5@0.5"), 1.0, 1.5, 0.2, 0.4)

    def test_bm_agrees_with_monte_carlo(self):
        m = parse_model("bm-copula")
        times = (1.0, 1.4, 2.0)
        grid = TimeGrid(np.array(times))
        n = 100_000
        batch = sample_paths(m, grid, n, PINNED_SEED)
        levels = (0.2, 0.5, 0.8)
        for i, s in enumerate(times):
            for j, t in enumerate(times):
                for x in levels:
                    for y in levels:
                        p_hat = float(np.mean((batch.values[:, i] <= x)
                                              & (batch.values[:, j] <= y)))
                        p = joint_cdf(m, s, t, x, y)
                        se = math.sqrt(max(p * (1 - p), 1e-12) / n)
                        assert abs(p_hat - p) <= 4 * se, (s, t, x, y)


class TestRhoMetric:
    def test_examples(self):
        assert rho_metric(1.3, 1.3, 5.0) == 0.0
        assert rho_metric(1.0, 2.0, 7.0) == 1.0
        assert rho_metric(1.0, 1.01, 5.0) == pytest.approx(0.01 ** 0.2, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            rho_metric(1.0, 1.5, 4.0)


class TestEnvelopeStatistics:
    def test_increment_mean_bound(self):
        grid = TimeGrid.uniform()
        stats = envelope_statistics(grid, 20_000, PINNED_SEED)
        for (t, eps), (m_hat, se, pts) in stats.m_table.items():
            bound = 2.0 * math.sqrt(2.0 / math.pi) * math.sqrt(eps)
            assert m_hat <= bound + 3.0 * se, (t, eps)

    def test_small_window_vanishes(self):
        grid = TimeGrid.uniform()
        stats = envelope_statistics(grid, 2000, 1, eps_values=(1e-4,))
        for (t, eps), (m_hat, _se, pts) in stats.m_table.items():
            assert pts == 0 and m_hat == 0.0
            assert m_hat < 0.05

    def test_sup_mean_positive(self):
        stats = envelope_statistics(TimeGrid.uniform(), 5000, 2)
        assert stats.d_env > 3.0 * stats.d_env_stderr

    def test_m0_is_table_max(self):
        stats = envelope_statistics(TimeGrid.uniform(), 2000, 3)
        assert stats.m0_hat == max(v[0] for v in stats.m_table.values())

    def test_needs_sample_size(self):
        with pytest.raises(DomainError):
            envelope_statistics(TimeGrid.uniform(), 100, 1)
