"""Leading-order tail approximations for maxima and boundary crossings.

The central quantity is

    P{sup_D X > c}  ~  psi(c) * Delta_c**(-d) * integral_D H(t) dt,

with ``psi(c) = exp(-c^2/2) / (sqrt(2 pi) c)`` and ``Delta_c`` the local
correlation length at level ``c``.  Variants handle a single cube, a moving
boundary and a boundary whose minimum sits on a smooth manifold.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, MonotonicityError, NumericalError
from .model import Boundary, LocalCovarianceModel, Region, TailApprox
from .quadrature import QuadratureSpec

SQRT_2PI = math.sqrt(2.0 * math.pi)


def psi(c):
    """Normal tail surrogate ``(2 pi c^2)^{-1/2} exp(-c^2/2)``; accepts arrays."""
    arr = np.asarray(c, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("c must be positive")
    out = np.exp(-0.5 * arr * arr) / (SQRT_2PI * arr)
    return float(out) if out.ndim == 0 else out


def _delta_many(c: np.ndarray, model: LocalCovarianceModel, x_max: float,
                check_monotone: bool) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    target = 1.0 / (2.0 * c * c)
    if model.unit_slowly_varying:
        return target ** (1.0 / model.alpha)

    def g(x):
        return x ** model.alpha * model.L(x)

    grid = np.logspace(-300, math.log10(x_max), 64)
    with np.errstate(all="ignore"):
        vals = g(grid)
    if np.any(~np.isfinite(vals)) or np.any(vals < 0):
        raise NumericalError("x^alpha L(x) is not finite and nonnegative on the search grid")
    if check_monotone:
        pos = vals > 0
        if np.any(np.diff(vals[pos]) <= 0):
            raise MonotonicityError("non-monotone: x^alpha L(x) is not increasing on the search grid")
    above = vals[None, :] >= target.reshape(-1, 1)
    if not np.all(above.any(axis=1)):
        raise BracketError(f"no bracket found below x_max={x_max:g}")
    idx = above.argmax(axis=1)
    if np.any(idx == 0):
        raise BracketError("no bracket found: root lies below the smallest grid point")
    lo = np.log(grid[idx - 1])
    hi = np.log(grid[idx])
    t = target.reshape(-1)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        up = g(np.exp(mid)) >= t
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return np.exp(0.5 * (lo + hi)).reshape(c.shape)


def delta_c(c, model: LocalCovarianceModel, x_max: float = 1e6, check_monotone: bool = True):
    """Smallest root of ``x^alpha L(x) = 1 / (2 c^2)``.

    For ``L == 1`` the closed form ``(2c^2)^{-1/alpha}`` is returned.
    Otherwise a 64-point log grid on ``[1e-300, x_max]`` brackets the
    leftmost crossing and log-space bisection refines it to about 1e-15
    relative.  The grid doubles as the monotonicity check.
    """
    arr = np.asarray(c, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("c must be positive")
    out = _delta_many(arr, model, x_max, check_monotone)
    return float(out) if np.ndim(out) == 0 else out


def h_closed_form(betas: Sequence[float]) -> float:
    """Pickands-type constant ``2^{-d} prod(beta)`` of an additive alpha = 1 field."""
    b = np.asarray(betas, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("betas must be a nonempty list")
    if np.any(~(b > 0)):
        raise ValueError("betas must be positive")
    return float(np.prod(b) / 2.0 ** b.size)


def additive_H(model: LocalCovarianceModel) -> Callable[[np.ndarray], np.ndarray]:
    """``t -> 2^{-d} prod_i beta_i(t)`` for a model with an additive decomposition."""
    d = model.dim

    def H(t):
        return np.prod(model.betas(t), axis=-1) / 2.0 ** d

    return H


def region_tail(c: float, region: Region, model: LocalCovarianceModel,
                H: Callable[[np.ndarray], np.ndarray], quad: QuadratureSpec | None = None) -> TailApprox:
    """``psi(c) Delta_c^{-d} int_D H`` with the integral by adaptive cubature."""
    res = region.integrate(H, quad)
    return TailApprox.from_factors(
        psi(c), delta_c(c, model) ** (-model.dim), res.value,
        notes="sup over a fixed domain: psi(c) Delta_c^-d int_D H",
        quad_error=res.error,
    )


def cube_tail(c: float, HK: float) -> float:
    """``psi(c) (1 + H_K)`` for a single cube of side ``K Delta_c``."""
    if HK < 0:
        raise ValueError("HK must be nonnegative")
    return psi(c) * (1.0 + HK)


def boundary_tail(boundary: Boundary, region: Region, model: LocalCovarianceModel,
                  H: Callable[[np.ndarray], np.ndarray], quad: QuadratureSpec | None = None,
                  prefactor: str = "local") -> TailApprox:
    """Crossing probability of a moving boundary.

    ``prefactor="local"`` integrates ``psi(b(t)) Delta_{b(t)}^{-d} H(t)``.
    ``prefactor="reference"`` freezes the polynomial part at the reference
    level ``c = boundary.level`` and keeps only the Gaussian factor
    ``exp(-(b(t)^2 - c^2)/2)``; both agree to first order as ``c`` grows and
    coincide for a constant boundary.

    The result is factorised around ``c``: ``psi(c)``, ``Delta_c^{-d}`` and
    the integral of the integrand divided by both.
    """
    if prefactor not in ("local", "reference"):
        raise ValueError("prefactor must be 'local' or 'reference'")
    c = boundary.level
    d = model.dim
    dc = delta_c(c, model)

    def integrand(t):
        b = boundary(t)
        if np.any(~(b > 0)):
            raise ValueError("boundary must be positive on the region")
        gauss = np.exp(-0.5 * (b * b - c * c))
        h = np.asarray(H(t), dtype=float)
        if prefactor == "reference":
            return gauss * h
        return gauss * (c / b) * (delta_c(b, model) / dc) ** (-d) * h

    res = region.integrate(integrand, quad)
    return TailApprox.from_factors(
        psi(c), dc ** (-d), res.value,
        notes=f"moving boundary, {prefactor} prefactor",
        quad_error=res.error,
    )


def manifold_tail(c: float, boundary: Boundary, model: LocalCovarianceModel,
                  H: Callable[[np.ndarray], np.ndarray], quad: QuadratureSpec | None = None) -> TailApprox:
    """Laplace-type approximation when ``b_c = c b`` is minimal on a manifold.

    Evaluates ``psi(c b_D) b_D^{2d/alpha} Delta_c^{-d} (2 pi / (c^2 b_D))^{(d-q)/2}
    int_M |normal Hessian|^{-1/2} H dv_q`` where ``b_D`` is the minimum of
    ``b``.  The last two factors form ``h_integral``.
    """
    mf = boundary.manifold
    if mf is None or boundary.kind != "scaled":
        raise ValueError("manifold_tail needs a scaled boundary with a minimum manifold")
    if model.alpha >= 2:
        raise ValueError("manifold approximation requires alpha < 2")
    d, q = model.dim, mf.q
    if not 0 <= q < d:
        raise ValueError("manifold dimension must satisfy 0 <= q < d")
    bad = mf.check_hessian()
    if bad:
        raise NumericalError(bad[0])
    if q == 0:
        probe = mf.points
    else:
        probe = np.asarray(mf.points(mf.params.sample(16))[0], float)
    shape_vals = np.asarray(boundary.shape(probe), float)
    b_min = float(shape_vals[0])
    if not np.allclose(shape_vals, b_min, rtol=1e-8):
        raise ValueError("boundary shape is not constant on the supplied manifold")

    def weight(t):
        det = np.array([np.linalg.det(np.atleast_2d(mf.normal_hessian(p))) for p in t])
        if np.any(det <= 0):
            raise NumericalError("normal Hessian is not positive definite at a chart node")
        return det ** -0.5 * np.asarray(H(t), float)

    integral = mf.integrate(weight, quad)
    laplace = (2.0 * math.pi / (c * c * b_min)) ** ((d - q) / 2.0)
    return TailApprox.from_factors(
        psi(c * b_min),
        b_min ** (2.0 * d / model.alpha) * delta_c(c, model) ** (-d),
        laplace * integral,
        notes=f"boundary minimum on a {q}-dimensional manifold",
    )


def empproc_tail(c: float, d: int, surface_integral: float, two_sided: bool = False) -> float:
    """``(8c^2)^{d-1} exp(-2c^2)`` times the level-set integral, doubled if two-sided."""
    if not surface_integral > 0:
        raise ValueError("surface_integral must be positive")
    val = (8.0 * c * c) ** (d - 1) * math.exp(-2.0 * c * c) * surface_integral
    return 2.0 * val if two_sided else val


# closed forms used as oracles


def scan_closed_form(c: float, a: float, a1: float, a2: float) -> float:
    """Fixed-level scan approximation ``psi(c) c^4/4 [a(1/a1 - 1/a2) - log(a2/a1)]``."""
    return psi(c) * c ** 4 / 4.0 * (a * (1.0 / a1 - 1.0 / a2) - math.log(a2 / a1))


def scan_boundary_closed_form(c: float, beta: float, a: float, a1: float, a2: float) -> float:
    """Scan approximation for the level ``sqrt(c^2 - 2 beta log(t2 - t1))``, ``beta > 1``."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    bracket = a * (a2 ** (beta - 1) - a1 ** (beta - 1)) / (beta - 1) - (a2 ** beta - a1 ** beta) / beta
    return c ** 4 * psi(c) / 4.0 * bracket


def multiindex_closed_form(c: float, d: int, volume: float) -> float:
    """``2^{-d} v(D) c^{2d} psi(c)`` for the OU-sheet limit of normalised partial sums."""
    return 2.0 ** (-d) * volume * c ** (2 * d) * psi(c)
