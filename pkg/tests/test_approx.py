import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq
from scipy.stats import norm

from fieldcross.approx import (additive_H, boundary_tail, cube_tail, delta_c, empproc_tail, h_closed_form,
                               manifold_tail, multiindex_closed_form, psi, region_tail, scan_boundary_closed_form,
                               scan_closed_form)
from fieldcross.errors import MonotonicityError, NumericalError
from fieldcross.model import Boundary, LocalCovarianceModel, Region
from fieldcross.presets import (empirical_preset, empirical_surface_integral, multiindex_preset,
                                scan_boundary_preset, scan_preset)


def _scan_draw(rng):
    a = rng.uniform(0.5, 3.0)
    a1, a2 = np.sort(rng.uniform(0.05 * a, a, size=2))
    return float(rng.uniform(2.0, 5.0)), a, float(a1), float(a2)


class TestPsiAndDelta:
    @pytest.mark.parametrize("c", [0.5, 1.0, 3.0, 10.0, 30.0])
    def test_psi_times_c_is_density(self, c):
        assert psi(c) * c == pytest.approx(norm.pdf(c), rel=1e-12)

    def test_psi_vectorised(self):
        c = np.array([1.0, 2.0])
        np.testing.assert_allclose(psi(c) * c, norm.pdf(c), rtol=1e-12)

    def test_psi_upper_bounds_normal_tail(self):
        c = np.linspace(0.5, 8, 30)
        assert np.all(psi(c) > norm.sf(c))
        assert psi(30.0) / norm.sf(30.0) == pytest.approx(1.0, rel=2e-3)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_delta_closed_form_for_unit_L(self, alpha):
        m = LocalCovarianceModel.constant(1, alpha)
        assert delta_c(3.0, m) == (2 * 9.0) ** (-1.0 / alpha)

    def test_delta_solves_defining_equation(self):
        L = lambda x: np.log(np.e + 1.0 / x)
        m = LocalCovarianceModel(1.0, lambda t, v: np.ones(v.shape[:-1]), 1, slowly_varying=L)
        c = 4.0
        x = delta_c(c, m)
        oracle = brentq(lambda y: y * math.log(math.e + 1.0 / y) - 1.0 / (2 * c * c), 1e-12, 1.0, xtol=1e-300)
        assert x == pytest.approx(oracle, rel=1e-10)

    def test_delta_rejects_non_monotone(self):
        L = lambda x: np.exp(-x)
        m = LocalCovarianceModel(1.0, lambda t, v: np.ones(v.shape[:-1]), 1, slowly_varying=L)
        with pytest.raises((MonotonicityError, NumericalError)):
            delta_c(3.0, m)


class TestClosedForms:
    def test_h_closed_form(self):
        assert h_closed_form([1.0, 1.0]) == 0.25
        assert h_closed_form([2.0, 0.5, 3.0]) == pytest.approx(3.0 / 8)

    def test_cube_tail(self):
        assert cube_tail(3.0, 1.5) == pytest.approx(2.5 * psi(3.0))
        with pytest.raises(ValueError):
            cube_tail(3.0, -0.1)

    def test_scan_reference_values(self):
        assert scan_closed_form(3.0, 1.0, 0.25, 0.5) == pytest.approx(0.03909447175, rel=1e-9)
        assert scan_boundary_closed_form(3.0, 2.0, 1.0, 0.25, 0.5) == pytest.approx(0.004674215122, rel=1e-9)

    def test_empproc_tail_d1(self):
        assert empproc_tail(1.5, 1, 1.0) == pytest.approx(math.exp(-4.5), rel=1e-15)
        assert empproc_tail(1.5, 1, 1.0, two_sided=True) == pytest.approx(2 * math.exp(-4.5))


class TestRegionTail:
    def test_scan_matches_closed_form_random(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            c, a, a1, a2 = _scan_draw(rng)
            pre = scan_preset(a, a1, a2)
            got = region_tail(c, pre.region, pre.model, pre.H).value
            assert got == pytest.approx(scan_closed_form(c, a, a1, a2), rel=1e-6)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_multiindex_matches_closed_form(self, d):
        region = Region.box([0.0] * d, [2.0] + [1.0] * (d - 1))
        pre = multiindex_preset(d, region)
        got = region_tail(3.0, region, pre.model, pre.H)
        assert got.value == pytest.approx(multiindex_closed_form(3.0, d, 2.0), rel=1e-12)
        assert got.value == pytest.approx(got.psi_factor * got.delta_inv_factor * got.h_integral, rel=1e-12)

    def test_additive_H_product(self):
        m = LocalCovarianceModel.additive([2.0, 3.0])
        assert additive_H(m)(np.zeros((1, 2)))[0] == pytest.approx(1.5)


class TestBoundaryTail:
    def test_reference_prefactor_matches_closed_form_random(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            c, a, a1, a2 = _scan_draw(rng)
            beta = float(rng.uniform(1.2, 3.0))
            pre = scan_boundary_preset(c, beta, a, a1, a2)
            got = boundary_tail(pre.boundary, pre.region, pre.model, pre.H, prefactor="reference").value
            assert got == pytest.approx(scan_boundary_closed_form(c, beta, a, a1, a2), rel=1e-6)

    def test_local_prefactor_exceeds_reference_for_lowered_boundary(self):
        pre = scan_boundary_preset(3.0, 2.0, 1.0, 0.25, 0.5)
        local = boundary_tail(pre.boundary, pre.region, pre.model, pre.H).value
        ref = boundary_tail(pre.boundary, pre.region, pre.model, pre.H, prefactor="reference").value
        # the level drops below c, so the polynomial factor b^4 psi(b) / c^4 psi(c) exceeds its frozen value
        assert local > ref

    def test_constant_boundary_reduces_to_region_tail(self):
        pre = scan_preset(1.0, 0.25, 0.5)
        b = Boundary.constant(3.0)
        for mode in ("local", "reference"):
            got = boundary_tail(b, pre.region, pre.model, pre.H, prefactor=mode).value
            assert got == pytest.approx(scan_closed_form(3.0, 1.0, 0.25, 0.5), rel=1e-9)

    def test_bad_prefactor(self):
        pre = scan_preset(1.0, 0.25, 0.5)
        with pytest.raises(ValueError):
            boundary_tail(Boundary.constant(3.0), pre.region, pre.model, pre.H, prefactor="frozen")


class TestManifoldTail:
    def test_surface_integral_half_log2(self):
        assert empirical_surface_integral(2) == pytest.approx(0.5 * math.log(2.0), abs=1e-6)

    @pytest.mark.parametrize("c", [1.0, 1.5, 3.0])
    def test_d1_equals_exponential(self, c):
        pre = empirical_preset(c, 1)
        got = manifold_tail(c, pre.boundary, pre.model, pre.H)
        assert got.value == pytest.approx(math.exp(-2 * c * c), rel=1e-10)

    @pytest.mark.parametrize("c", [1.0, 1.5, 3.0])
    def test_d2_equals_surface_formula(self, c):
        pre = empirical_preset(c, 2)
        got = manifold_tail(c, pre.boundary, pre.model, pre.H).value
        assert got == pytest.approx(empproc_tail(c, 2, 0.5 * math.log(2.0)), rel=1e-7)
        assert got == pytest.approx(4 * math.log(2.0) * c * c * math.exp(-2 * c * c), rel=1e-7)

    def test_requires_manifold(self):
        pre = empirical_preset(1.5, 1)
        with pytest.raises(ValueError):
            manifold_tail(1.5, Boundary.constant(1.5), pre.model, pre.H)

    def test_rejects_alpha_two(self):
        pre = empirical_preset(1.5, 1)
        smooth = LocalCovarianceModel.constant(1, 2.0)
        with pytest.raises(ValueError):
            manifold_tail(1.5, pre.boundary, smooth, pre.H)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1.5, 6.0), lam=st.floats(0.25, 4.0))
def test_region_tail_scales_with_r(c, lam):
    # r -> lam r with alpha = 1 multiplies H by lam^d and leaves Delta_c fixed
    region = Region.box([0.0, 0.0], [1.0, 2.0])
    m = LocalCovarianceModel.additive([0.5, 0.5])
    base = region_tail(c, region, m, additive_H(m)).value
    scaled = m.scaled(lam)
    got = region_tail(c, region, scaled, additive_H(scaled)).value
    assert got == pytest.approx(lam ** 2 * base, rel=1e-10)
