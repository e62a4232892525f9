import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ksone, kstwo, norm

from fieldcross._kernels import empirical_sup2, empirical_sup2_brute, scan_max
from fieldcross.errors import GridResolutionWarning
from fieldcross.model import Region
from fieldcross.rng import block_sizes, generator
from fieldcross.simulate import (MCEstimate, ScanConfig, brownian_scan_mc, empirical_process_mc,
                                 exact_ks_one_sided, multiindex_sum_demo, ou_exceedance_continuum,
                                 ou_exceedance_lattice, ou_field_mc, ou_sheet_sample, scan_statistics)


def _scan_brute(path, w_lo, w_hi):
    best = -np.inf
    n = path.size - 1
    for w in range(w_lo, w_hi + 1):
        for i in range(0, n - w + 1):
            best = max(best, (path[i + w] - path[i]) / math.sqrt(w))
    return best


class TestMCEstimate:
    def test_probability_stderr_enforced(self):
        with pytest.raises(ValueError):
            MCEstimate(0.5, 0.1, 100, 0)

    def test_from_indicators(self):
        est = MCEstimate.from_indicators(np.array([1, 0, 0, 1, 1], bool), seed=3)
        assert est.p_hat == pytest.approx(0.6)
        assert est.stderr == pytest.approx(math.sqrt(0.6 * 0.4 / 5))

    def test_from_values_uses_sample_sd(self):
        est = MCEstimate.from_values(np.array([1.0, 2.0, 3.0]), seed=0)
        assert est.estimate == 2.0
        assert est.stderr == pytest.approx(1.0 / math.sqrt(3))

    def test_to_dict_omits_timing_by_default(self):
        est = MCEstimate.from_indicators(np.ones(4, bool), seed=1, wall_time=2.5)
        assert est.to_dict()["wall_time"] is None
        assert est.to_dict(timing=True)["wall_time"] == 2.5


class TestRng:
    def test_block_sizes(self):
        assert block_sizes(2500, 1000) == [1000, 1000, 500]

    def test_streams_differ_by_name_and_block(self):
        a = generator(1, "x", 0).random(4)
        assert not np.array_equal(a, generator(1, "y", 0).random(4))
        assert not np.array_equal(a, generator(1, "x", 1).random(4))
        np.testing.assert_array_equal(a, generator(1, "x", 0).random(4))


class TestScan:
    def test_kernel_matches_brute_force(self):
        g = np.random.default_rng(0)
        paths = np.zeros((5, 41))
        paths[:, 1:] = np.cumsum(g.standard_normal((5, 40)), axis=1)
        got = scan_max(paths, 10, 20)
        for k in range(5):
            assert got[k] == pytest.approx(_scan_brute(paths[k], 10, 20), rel=1e-13)

    def test_single_window_is_standard_normal(self):
        # one window of full length: the statistic is W(a)/sqrt(a)
        cfg = ScanConfig(1.0, 1.0, 1.0, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GridResolutionWarning)
            est = brownian_scan_mc(1.0, cfg, 40000, seed=2)
        assert abs(est.p_hat - norm.sf(1.0)) < 4 * est.stderr

    def test_brownian_scaling_is_bitwise(self):
        a = scan_statistics(ScanConfig(1.0, 0.25, 0.5, 0.01), 300, seed=4)
        b = scan_statistics(ScanConfig(2.0, 0.5, 1.0, 0.02), 300, seed=4)
        np.testing.assert_array_equal(a, b)

    def test_statistic_monotone_in_window_family(self):
        narrow = scan_statistics(ScanConfig(1.0, 0.3, 0.4, 0.01), 200, seed=6)
        wide = scan_statistics(ScanConfig(1.0, 0.2, 0.5, 0.01), 200, seed=6)
        assert np.all(wide >= narrow)

    @pytest.mark.parametrize("args", [(1.0, 0.5, 0.25, 0.01), (1.0, 0.25, 0.5, 0.3), (1.0, 0.25, 0.5, -0.1)])
    def test_config_validation(self, args):
        with pytest.raises(ValueError):
            ScanConfig(*args)

    def test_resolution_warning(self):
        with pytest.warns(GridResolutionWarning):
            brownian_scan_mc(3.0, ScanConfig(1.0, 0.25, 0.5, 0.05), 1000, seed=0)

    def test_reps_minimum(self):
        with pytest.raises(ValueError):
            brownian_scan_mc(3.0, ScanConfig(1.0, 0.25, 0.5, 1e-3), 999, seed=0)


class TestOU:
    def test_lag_correlation(self):
        g = np.random.default_rng(0)
        rho = math.exp(-0.5 * 0.1)
        z = ou_sheet_sample(g, 20000, [3], [rho])
        c = np.corrcoef(z[:, 0], z[:, 2])[0, 1]
        assert z[:, 2].var() == pytest.approx(1.0, abs=0.03)
        assert c == pytest.approx(rho ** 2, abs=0.02)

    def test_sheet_product_correlation(self):
        g = np.random.default_rng(1)
        z = ou_sheet_sample(g, 20000, [2, 2], [0.8, 0.5])
        assert np.corrcoef(z[:, 0, 0], z[:, 1, 1])[0, 1] == pytest.approx(0.4, abs=0.02)

    def test_mc_matches_lattice_oracle(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GridResolutionWarning)
            est = ou_field_mc(3.0, Region.box([0.0], [10.0]), 0.05, 40000, seed=9)
        exact = ou_exceedance_lattice(3.0, 10.0, 0.05)
        assert abs(est.p_hat - exact) < 4 * est.stderr

    def test_lattice_oracle_single_point(self):
        assert ou_exceedance_lattice(2.0, 0.0, 0.1) == pytest.approx(norm.sf(2.0), rel=1e-9)

    def test_lattice_oracle_two_points(self):
        # P{max(X0, X1) > c} = 2 sf(c) - P{X0 > c, X1 > c} with correlation rho
        from scipy.stats import multivariate_normal
        rho = math.exp(-0.5 * 0.3)
        both = multivariate_normal([0, 0], [[1, rho], [rho, 1]]).cdf([-1.5, -1.5])
        assert ou_exceedance_lattice(1.5, 0.3, 0.3) == pytest.approx(2 * norm.sf(1.5) - both, rel=1e-6)

    def test_continuum_oracle_zero_horizon(self):
        assert ou_exceedance_continuum(3.0, 0.0) == pytest.approx(norm.sf(3.0), rel=1e-4)

    def test_continuum_bounds_lattice(self):
        cont = ou_exceedance_continuum(3.0, 10.0, nx=1000, nt=1000)
        lat = [ou_exceedance_lattice(3.0, 10.0, h, nodes=1000) for h in (0.5, 0.1, 0.02)]
        assert lat[0] < lat[1] < lat[2] < cont

    def test_continuum_oracle_grid_converged(self):
        coarse = ou_exceedance_continuum(3.0, 10.0, nx=1000, nt=1000)
        fine = ou_exceedance_continuum(3.0, 10.0, nx=2000, nt=2000)
        assert coarse == pytest.approx(fine, rel=1e-3)

    def test_collapsed_side(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GridResolutionWarning)
            est = ou_field_mc(2.0, Region.box([0.0, 0.0], [0.01, 1.0]), 0.05, 2000, seed=1)
        assert 0 < est.p_hat < 1

    def test_region_validation(self):
        with pytest.raises(ValueError):
            ou_field_mc(3.0, Region((((0,), (1,)), ((1,), (2,)))), 0.01, 10, seed=0)


class TestEmpiricalProcess:
    @pytest.mark.parametrize("n,c", [(1, 0.5), (2, 0.5), (10, 0.7), (100, 1.0), (10000, 1.5)])
    def test_exact_one_sided_matches_library(self, n, c):
        assert exact_ks_one_sided(n, c) == pytest.approx(ksone.sf(c / math.sqrt(n), n), rel=1e-8)

    def test_exact_two_points_by_hand(self):
        # no exceedance iff U(1) >= 1/2 - eps and U(2) >= 1 - eps; the order statistics have density 2
        eps = 0.5 / math.sqrt(2)
        expected = 1 - ((1 - (0.5 - eps)) ** 2 - 0.25)
        assert exact_ks_one_sided(2, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_exact_edge_cases(self):
        assert exact_ks_one_sided(10, 0.0) == 1.0
        assert exact_ks_one_sided(4, 2.0) == 0.0

    @pytest.mark.parametrize("n", [1, 2, 10, 100])
    def test_mc_one_sided_against_exact(self, n):
        c = 0.6
        est = empirical_process_mc(n, 1, c, reps=20000, seed=n)
        assert abs(est.p_hat - exact_ks_one_sided(n, c)) < 4 * est.stderr

    def test_mc_two_sided_against_library(self):
        n, c = 50, 1.0
        est = empirical_process_mc(n, 1, c, two_sided=True, reps=20000, seed=7)
        assert abs(est.p_hat - kstwo.sf(c / math.sqrt(n), n)) < 4 * est.stderr

    @pytest.mark.parametrize("two_sided", [False, True])
    def test_sup2_kernel_matches_brute(self, two_sided):
        g = np.random.default_rng(11)
        for n in (1, 2, 5, 17, 60, 100):
            x, y = g.random(n), g.random(n)
            got = empirical_sup2(x, y, 4, -np.inf, two_sided)
            assert got == pytest.approx(empirical_sup2_brute(x, y, two_sided), abs=1e-9)

    def test_sup2_threshold_exact_above(self):
        g = np.random.default_rng(12)
        n = 80
        for _ in range(20):
            x, y = g.random(n), g.random(n)
            full = empirical_sup2_brute(x, y, False)
            thr = 0.8 * full
            assert empirical_sup2(x, y, 4, thr, False) == pytest.approx(full, abs=1e-9)

    def test_d2_exact_sup_flag_agrees_above_level(self):
        a = empirical_process_mc(200, 2, 0.8, reps=300, seed=3)
        b = empirical_process_mc(200, 2, 0.8, reps=300, seed=3, exact_sup=True)
        assert a.p_hat == b.p_hat
        hi = b.samples > 0.8
        np.testing.assert_allclose(a.samples[hi], b.samples[hi], rtol=1e-12)

    def test_regime_warning(self):
        with pytest.warns(UserWarning, match="asymptotic regime"):
            empirical_process_mc(64, 1, 2.5, reps=100, seed=0)

    def test_validation(self):
        with pytest.raises(ValueError):
            empirical_process_mc(10, 3, 1.0)
        with pytest.raises(ValueError):
            empirical_process_mc(10, 1, 1.0, marginals="gaussian-copula")


class TestMultiIndex:
    def test_partial_sums_one_dimensional(self):
        demo = multiindex_sum_demo([50], "rademacher", seed=1)
        s = demo.field * np.sqrt(np.arange(1, 51))
        steps = np.diff(np.concatenate([[0.0], s]))
        np.testing.assert_allclose(np.abs(steps), 1.0, rtol=1e-12)

    def test_two_dimensional_rectangle_sums(self):
        demo = multiindex_sum_demo([8, 6], "standard-normal", seed=2)
        n1, n2 = np.meshgrid(np.arange(1, 9), np.arange(1, 7), indexing="ij")
        s = demo.field * np.sqrt(n1 * n2)
        # inclusion-exclusion recovers the summands, which must be distinct draws
        y = s.copy()
        y[1:, :] -= s[:-1, :]
        y[:, 1:] -= s[:, :-1]
        y[1:, 1:] += s[:-1, :-1]
        assert np.unique(np.round(y, 12)).size == 48

    def test_reproducible(self):
        a = multiindex_sum_demo([20, 20], seed=3)
        b = multiindex_sum_demo([20, 20], seed=3)
        assert a.lil_stat == b.lil_stat

    def test_small_box_has_no_lil_ratio(self):
        assert math.isnan(multiindex_sum_demo([3, 3], seed=0).lil_stat)

    def test_memory_cap(self):
        with pytest.raises(ValueError, match="cap"):
            multiindex_sum_demo([10000, 10000])

    def test_bad_dist(self):
        with pytest.raises(ValueError):
            multiindex_sum_demo([4], dist="cauchy")

    def test_uniform_variance(self):
        demo = multiindex_sum_demo([40000], "uniform-centered", seed=5)
        y = np.diff(np.concatenate([[0.0], demo.field * np.sqrt(np.arange(1, 40001))]))
        assert y.var() == pytest.approx(1.0, abs=0.03)


class TestDeterminism:
    @pytest.mark.parametrize("workers", [4, 8])
    def test_ks1_workers(self, workers):
        a = empirical_process_mc(100, 1, 1.0, reps=5000, seed=5, workers=1)
        b = empirical_process_mc(100, 1, 1.0, reps=5000, seed=5, workers=workers)
        np.testing.assert_array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("workers", [4, 8])
    def test_ou_workers(self, workers):
        region = Region.box([0.0], [2.0])
        a = ou_field_mc(2.0, region, 0.01, 3000, seed=6, workers=1, block_size=500)
        b = ou_field_mc(2.0, region, 0.01, 3000, seed=6, workers=workers, block_size=500)
        np.testing.assert_array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("workers", [4, 8])
    def test_scan_workers(self, workers):
        cfg = ScanConfig(1.0, 0.25, 0.5, 0.01)
        np.testing.assert_array_equal(scan_statistics(cfg, 700, seed=7, workers=1),
                                      scan_statistics(cfg, 700, seed=7, workers=workers))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 400), c=st.floats(0.05, 3.0))
def test_exact_ks_is_a_probability_decreasing_in_c(n, c):
    p = exact_ks_one_sided(n, c)
    assert 0.0 <= p <= 1.0
    assert exact_ks_one_sided(n, c + 0.1) <= p + 1e-12
