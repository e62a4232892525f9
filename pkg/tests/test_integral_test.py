import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fieldcross import integral_test as it


def _brute_box_sum(beta, d, n_max, epsilon=0.0):
    # sum over [1, n_max]^d with |n| >= 16 of |n|^-1 beta^(2d-1) exp(-beta^2/2)
    axes = np.meshgrid(*[np.arange(1, n_max + 1, dtype=float)] * d, indexing="ij")
    n = np.stack([a.ravel() for a in axes], axis=1)
    size = n.prod(axis=1)
    keep = size >= 16
    v = np.log(n[keep])
    if epsilon > 0:
        keep2 = np.all(v >= epsilon * v.sum(axis=1, keepdims=True) * (1 - 1e-12), axis=1)
    else:
        keep2 = np.ones(v.shape[0], bool)
    b = beta(v)
    terms = b ** (2 * d - 1) * np.exp(-0.5 * b * b) / size[keep]
    return float(np.sum(terms[keep2]))


class TestCheckpointsAndClassify:
    def test_checkpoints(self):
        w = it.checkpoints(10.0, 10.0)
        assert w[0] == pytest.approx(math.log(math.log(16.0)))
        np.testing.assert_allclose(np.diff(w), math.log(10.0))
        assert w[-1] <= 10.0

    def test_checkpoint_validation(self):
        with pytest.raises(ValueError):
            it.checkpoints(0.5)
        with pytest.raises(ValueError):
            it.checkpoints(10.0, 1.0)

    def test_classify_power_laws(self):
        w = np.linspace(1, 40, 60)
        for p, label in [(2.0, it.CONVERGENT), (0.0, it.DIVERGENT), (1.0, it.INCONCLUSIVE)]:
            # increments behaving like w^-p
            partial = np.concatenate([[0.0], np.cumsum(w[1:] ** (-p) * np.diff(w))])
            slope, got = it.classify(w, partial, 10.0)
            assert got == label
            assert slope == pytest.approx(-p, abs=0.05)

    def test_classify_vanishing_tail(self):
        w = np.linspace(1, 40, 20)
        partial = np.full(20, 3.0)
        assert it.classify(w, partial, 10.0) == (None, it.CONVERGENT)

    def test_thresholds_order(self):
        with pytest.raises(ValueError):
            it.classify(np.arange(5.0), np.arange(5.0), 0.0, thresholds=(-0.9, -1.1))

    def test_diagnostic_rejects_decreasing_sums(self):
        with pytest.raises(ValueError):
            it.SeriesDiagnostic("x", (1.0, 2.0), (1.0, 0.5), None, it.CONVERGENT, (-1.05, -0.95), 1.0)


class TestExactRange:
    @pytest.mark.parametrize("d,eps", [(1, 0.0), (2, 0.0), (2, 0.2)])
    def test_series_is_exact_integer_sum_below_cutoff(self, d, eps):
        beta = it.lil_beta(d, 0.3)
        diag = it.j_series(beta, eps, d, w_max=1.7, base=1.1)
        for wk, sk in zip(diag.checkpoints, diag.partial_sums):
            n_max = int(math.floor(math.exp(math.exp(wk)) + 1e-9))
            assert sk == pytest.approx(_brute_box_sum(beta, d, n_max, eps), rel=1e-12)

    def test_integral_in_log_coordinates(self):
        # with beta constant the d = 1 integral is beta e^{-beta^2/2} (log T - log 16)
        const = lambda v: np.full(v.shape[0], 1.3)
        diag = it.multi_integral(const, 1, w_max=3.0, base=2.0)
        u = np.exp(np.asarray(diag.checkpoints))
        expected = 1.3 * math.exp(-0.5 * 1.69) * (u - math.log(16.0))
        np.testing.assert_allclose(diag.partial_sums, expected, rtol=1e-10, atol=1e-14)

    def test_kef_integral_closed_form(self):
        # constant normalised boundary x: integrand x phi(x) e^w, so S(w) = x phi(x) (e^w - e^{w0})
        diag = it.kef_integral(lambda u: np.full_like(u, 2.0), w_max=5.0, base=2.0)
        w = np.asarray(diag.checkpoints)
        phi2 = math.exp(-2.0) / math.sqrt(2 * math.pi)
        np.testing.assert_allclose(diag.partial_sums, 2.0 * phi2 * (np.exp(w) - np.exp(w[0])), rtol=1e-9)


class TestPresets:
    @pytest.mark.parametrize("d", [1, 2])
    def test_lil_labels(self, d):
        for delta, label in [(0.0, it.DIVERGENT), (0.5, it.CONVERGENT)]:
            beta = it.lil_beta(d, delta)
            assert it.j_series(beta, 0.0, d).label == label
            assert it.multi_integral(beta, d).label == label
            assert it.op_integral(it.lil_f(d, delta), d).label == label

    def test_kef_lil_and_linear(self):
        assert it.kef_integral(it.lil_boundary(0.0)).label == it.DIVERGENT
        assert it.kef_integral(it.lil_boundary(1.0)).label == it.CONVERGENT
        assert it.kef_integral(it.linear_boundary()).label == it.CONVERGENT

    def test_edge_example(self):
        beta, cond = it.edge_preset()
        assert cond["edge_cubic"].label == it.DIVERGENT
        assert cond["mixed"].label == it.CONVERGENT
        assert it.j_series(beta, 0.0, 2).label == it.DIVERGENT
        assert it.j_series(beta, 0.1, 2).label == it.CONVERGENT

    def test_edge_rejects_bad_gamma(self):
        # gamma = 3 makes the edge cubic series converge
        with pytest.raises(ValueError, match="defining conditions"):
            it.edge_preset(gamma=3.0)

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            it.j_series(it.lil_beta(1, 0.0), 1.0, 1)

    def test_three_dimensional_sum_unsupported(self):
        with pytest.raises(ValueError):
            it.multi_integral(it.lil_beta(3, 0.5), 3)

    def test_natural_wrappers(self):
        b = it.from_natural_boundary(lambda t: np.sqrt(3.0 * t * np.log(np.log(t))))
        u = np.array([5.0, 10.0])
        np.testing.assert_allclose(b(u), it.lil_boundary(1.0)(u), rtol=1e-12)
        np.testing.assert_allclose(it.from_natural_f(lambda x: np.log(x))(u), u)
        np.testing.assert_allclose(it.from_natural_beta(lambda n: n[..., 0])(np.array([[1.0]])), [math.e])


class TestWSequence:
    def test_first_terms(self):
        w, ratio = it.w_sequence(3)
        assert w[0] == 2.0
        assert w[1] == pytest.approx(2.0 + math.log(2.0))
        assert w[2] == pytest.approx(w[1] + math.log(w[1]))
        assert math.isnan(ratio[0])

    def test_ratio_decays_slowly_after_its_peak(self):
        w, ratio = it.w_sequence(1_000_000)
        assert ratio[-1] == pytest.approx(1.1204, abs=1e-4)
        assert ratio[9_999] > ratio[99_999] > ratio[-1] > 1.0


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(0.0, 1.0), d=st.sampled_from([1, 2]))
def test_partial_sums_monotone_in_delta(delta, d):
    # raising the boundary can only shrink every partial sum
    lo = it.multi_integral(it.lil_beta(d, delta), d, w_max=8.0)
    hi = it.multi_integral(it.lil_beta(d, delta + 0.25), d, w_max=8.0)
    assert np.all(np.asarray(hi.partial_sums) <= np.asarray(lo.partial_sums) * (1 + 1e-12))
