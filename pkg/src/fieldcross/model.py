"""Shared data model: local covariance structure, domains, boundaries.

All callables follow numpy broadcasting conventions.  Positions ``t`` and
directions ``v`` are arrays whose last axis has length ``dim``; scalar-valued
callables return arrays of the broadcast leading shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .quadrature import QuadratureSpec, QuadResult, integrate_boxes


def _unit_L(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LocalCovarianceModel:
    """Local behaviour ``1 - |u|^alpha L(|u|) r(t, u/|u|)`` of a correlation.

    Parameters
    ----------
    alpha : float
        Local Hoelder exponent, ``0 < alpha <= 2``.
    angular_scaling : callable
        ``r(t, v)`` for positions ``t`` and unit directions ``v``.
    dim : int
        Dimension of the index set.
    slowly_varying : callable, optional
        ``L(x)`` for ``x > 0``; defaults to the constant 1.
    additive_betas : callable, optional
        For ``alpha == 1`` models with ``r(t, v) = sum_i beta_i(t) |v_i|``,
        a map ``t -> beta(t)`` (shape ``(..., dim)``).  Enables the
        independent-increment sampler and the product closed form for the
        Pickands constant.
    """

    alpha: float
    angular_scaling: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    slowly_varying: Callable[[np.ndarray], np.ndarray] = _unit_L
    additive_betas: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha out of range: {self.alpha} not in (0, 2]")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.additive_betas is not None and self.alpha != 1.0:
            raise ValueError("additive decomposition requires alpha == 1")

    @property
    def unit_slowly_varying(self) -> bool:
        return self.slowly_varying is _unit_L

    def r(self, t, v) -> np.ndarray:
        return np.asarray(self.angular_scaling(np.asarray(t, float), np.asarray(v, float)), float)

    def L(self, x) -> np.ndarray:
        return np.asarray(self.slowly_varying(np.asarray(x, float)), float)

    def betas(self, t) -> np.ndarray:
        if self.additive_betas is None:
            raise ValueError(f"model {self.name!r} has no additive decomposition")
        return np.asarray(self.additive_betas(np.asarray(t, float)), float)

    def scaled(self, lam: float) -> "LocalCovarianceModel":
        """Model with ``r`` replaced by ``lam * r``."""
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        r0 = self.angular_scaling
        b0 = self.additive_betas
        return LocalCovarianceModel(
            alpha=self.alpha,
            angular_scaling=lambda t, v: lam * r0(t, v),
            dim=self.dim,
            slowly_varying=self.slowly_varying,
            additive_betas=None if b0 is None else (lambda t: lam * np.asarray(b0(t), float)),
            name=f"{self.name}*{lam:g}",
        )

    @classmethod
    def constant(cls, dim: int, alpha: float = 1.0, level: float = 1.0) -> "LocalCovarianceModel":
        def r(t, v):
            return np.full(np.broadcast_shapes(np.shape(t)[:-1], np.shape(v)[:-1]), float(level))

        return cls(alpha=alpha, angular_scaling=r, dim=dim, name="constant")

    @classmethod
    def additive(cls, betas, dim: int | None = None, name: str = "additive") -> "LocalCovarianceModel":
        """``alpha = 1`` model with ``r(t, v) = sum_i beta_i(t) |v_i|``.

        ``betas`` is either a fixed sequence or a callable ``t -> beta(t)``.
        """
        if callable(betas):
            if dim is None:
                raise ValueError("dim is required with callable betas")
            beta_fn = betas
        else:
            fixed = np.asarray(betas, dtype=float)
            if fixed.ndim != 1 or fixed.size == 0 or np.any(fixed <= 0):
                raise ValueError("betas must be a nonempty list of positive numbers")
            dim = fixed.size if dim is None else dim
            if fixed.size != dim:
                raise ValueError("betas length does not match dim")

            def beta_fn(t):
                return np.broadcast_to(fixed, np.shape(t)[:-1] + (fixed.size,))

        def r(t, v):
            return np.sum(np.asarray(beta_fn(t)) * np.abs(v), axis=-1)

        return cls(alpha=1.0, angular_scaling=r, dim=int(dim), additive_betas=beta_fn, name=name)


Chart = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class Region:
    """Finite union of interior-disjoint boxes, optionally pushed through a chart.

    Without a chart the region is the union of ``rects`` in index space.
    With a chart ``phi`` the boxes live in a parameter space and the region
    is their image; ``phi(x)`` must return ``(points, |det Dphi(x)|)`` for an
    ``(N, k)`` array of parameters.  Integrals then pick up the Jacobian.
    """

    rects: tuple
    chart: Optional[Chart] = field(default=None, compare=False)
    name: str = "region"

    def __post_init__(self):
        rects = []
        for lo, hi in self.rects:
            lo = tuple(float(x) for x in np.atleast_1d(lo))
            hi = tuple(float(x) for x in np.atleast_1d(hi))
            if len(lo) != len(hi) or len(lo) == 0:
                raise ValueError("rectangle corners must have equal positive length")
            if not all(a < b for a, b in zip(lo, hi)):
                raise ValueError(f"rectangle lower corner must be below upper corner: {lo} vs {hi}")
            rects.append((lo, hi))
        if not rects:
            raise ValueError("region needs at least one rectangle")
        if len({len(lo) for lo, _ in rects}) != 1:
            raise ValueError("rectangles have mixed dimensions")
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                (a0, a1), (b0, b1) = rects[i], rects[j]
                if all(max(x0, y0) < min(x1, y1) for x0, x1, y0, y1 in zip(a0, a1, b0, b1)):
                    raise ValueError(f"rectangles {i} and {j} overlap")
        object.__setattr__(self, "rects", tuple(rects))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Region":
        return cls(((tuple(lower), tuple(upper)),))

    @property
    def param_dim(self) -> int:
        return len(self.rects[0][0])

    def box_volume(self) -> float:
        return float(sum(np.prod(np.subtract(hi, lo)) for lo, hi in self.rects))

    def volume(self, quad: QuadratureSpec | None = None) -> float:
        if self.chart is None:
            return self.box_volume()
        return self.integrate(lambda t: np.ones(t.shape[0]), quad).value

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], quad: QuadratureSpec | None = None) -> QuadResult:
        """Integrate ``f: (N, d) -> (N,)`` over the region."""
        if self.chart is None:
            return integrate_boxes(f, self.rects, quad)
        chart = self.chart

        def pulled(x):
            pts, jac = chart(x)
            return np.asarray(f(pts), float) * jac

        return integrate_boxes(pulled, self.rects, quad)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Scrambled Sobol points spread over the boxes in proportion to volume."""
        k = self.param_dim
        vols = np.array([np.prod(np.subtract(hi, lo)) for lo, hi in self.rects])
        counts = np.maximum(1, np.round(n * vols / vols.sum()).astype(int))
        out = []
        for i, ((lo, hi), m) in enumerate(zip(self.rects, counts)):
            u = qmc.Sobol(k, scramble=True, seed=seed + i).random(int(m))
            out.append(qmc.scale(u, lo, hi))
        x = np.vstack(out)
        if self.chart is not None:
            x = np.asarray(self.chart(x)[0], float)
        return x


def scan_window_region(a: float, a1: float, a2: float) -> Region:
    """``{(t1, t2): 0 <= t1 < t2 <= a, a1 <= t2 - t1 <= a2}`` via a shear chart.

    Parameters ``(s, tau)`` in ``[a1, a2] x [0, 1]`` map to
    ``t1 = tau (a - s)``, ``t2 = t1 + s`` with Jacobian ``a - s``.
    """
    if not (0 < a1 < a2 <= a):
        raise ValueError("need 0 < a1 < a2 <= a")

    def chart(x):
        s, tau = x[:, 0], x[:, 1]
        t1 = tau * (a - s)
        return np.column_stack([t1, t1 + s]), a - s

    return Region((((a1, 0.0), (a2, 1.0)),), chart=chart, name="scan-window")


@dataclass(frozen=True)
class MinimumManifold:
    """The set where a scaled boundary shape attains its minimum.

    Parameters
    ----------
    q : int
        Dimension of the manifold, ``0 <= q < d``.
    points : callable or array
        For ``q >= 1`` a chart ``x -> (t, v_q)`` from an ``(N, q)`` array of
        parameters to manifold points ``(N, d)`` and q-volume elements
        ``(N,)``.  For ``q = 0`` an ``(m, d)`` array of isolated minimisers.
    normal_hessian : callable
        ``t -> (d - q, d - q)`` Hessian of the shape restricted to the normal
        space at a manifold point ``t`` of shape ``(d,)``.
    params : Region, optional
        Parameter boxes of the chart (required when ``q >= 1``).
    """

    q: int
    points: object
    normal_hessian: Callable[[np.ndarray], np.ndarray]
    params: Optional[Region] = None

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("manifold dimension must be nonnegative")
        if self.q >= 1 and (self.params is None or not callable(self.points)):
            raise ValueError("a q >= 1 manifold needs a chart and parameter boxes")
        if self.q == 0:
            object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, float)))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], quad: QuadratureSpec | None = None) -> float:
        """Integral of ``f: (N, d) -> (N,)`` against ``v_q`` (counting measure if q = 0)."""
        if self.q == 0:
            return float(np.sum(f(self.points)))
        chart = self.points

        def pulled(x):
            t, vol = chart(x)
            return np.asarray(f(t), float) * vol

        return integrate_boxes(pulled, self.params.rects, quad).value

    def check_hessian(self, n: int = 32) -> list[str]:
        """Findings for nodes where the normal Hessian is not symmetric positive definite."""
        if self.q == 0:
            pts = self.points
        else:
            pts = np.asarray(self.points(self.params.sample(n))[0], float)
        findings = []
        for t in pts:
            h = np.atleast_2d(self.normal_hessian(t))
            if not np.allclose(h, h.T, rtol=1e-10, atol=1e-12):
                findings.append(f"normal Hessian not symmetric at {t.tolist()}")
            elif np.linalg.eigvalsh(h).min() <= 0:
                findings.append(f"normal Hessian not positive definite at {t.tolist()}")
        return findings


@dataclass(frozen=True)
class Boundary:
    """Crossing level as a function of position.

    ``kind`` is ``"constant"`` (``b_c = level``), ``"scaled"``
    (``b_c(t) = level * shape(t)``) or ``"general"`` (``b_c = func(t)``).
    """

    kind: str
    level: float
    shape: Optional[Callable[[np.ndarray], np.ndarray]] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    manifold: Optional[MinimumManifold] = None

    def __post_init__(self):
        if self.kind not in ("constant", "scaled", "general"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not self.level > 0:
            raise ValueError("boundary level must be positive")
        if self.kind == "scaled" and self.shape is None:
            raise ValueError("scaled boundary needs a shape function")
        if self.kind == "general" and self.func is None:
            raise ValueError("general boundary needs a callable")
        if self.manifold is not None and self.kind != "scaled":
            raise ValueError("a minimum manifold only applies to scaled boundaries")

    @classmethod
    def constant(cls, c: float) -> "Boundary":
        return cls("constant", c)

    @classmethod
    def scaled(cls, c: float, shape, manifold: MinimumManifold | None = None) -> "Boundary":
        return cls("scaled", c, shape=shape, manifold=manifold)

    @classmethod
    def general(cls, func, level: float) -> "Boundary":
        """``level`` is the reference level used to normalise factorizations."""
        return cls("general", level, func=func)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if self.kind == "constant":
            return np.full(t.shape[:-1], self.level)
        if self.kind == "scaled":
            return self.level * np.asarray(self.shape(t), float)
        return np.asarray(self.func(t), float)


@dataclass(frozen=True)
class TailApprox:
    """An asymptotic tail probability and its three factors."""

    value: float
    psi_factor: float
    delta_inv_factor: float
    h_integral: float
    notes: str = ""
    quad_error: float = 0.0

    def __post_init__(self):
        prod = self.psi_factor * self.delta_inv_factor * self.h_integral
        if not math.isclose(self.value, prod, rel_tol=1e-12, abs_tol=0.0) and not (self.value == prod == 0):
            raise ValueError("value must equal psi_factor * delta_inv_factor * h_integral")
        if self.value < 0:
            raise ValueError("tail approximation must be nonnegative")

    @classmethod
    def from_factors(cls, psi_factor, delta_inv_factor, h_integral, notes="", quad_error=0.0) -> "TailApprox":
        psi_factor, delta_inv_factor, h_integral = float(psi_factor), float(delta_inv_factor), float(h_integral)
        return cls(psi_factor * delta_inv_factor * h_integral, psi_factor, delta_inv_factor,
                   h_integral, notes, float(quad_error))

    def to_dict(self) -> dict:
        return {
            "type": "TailApprox",
            "value": self.value,
            "psi_factor": self.psi_factor,
            "delta_inv_factor": self.delta_inv_factor,
            "h_integral": self.h_integral,
            "quad_error": self.quad_error,
            "notes": self.notes,
        }


def validate_model(model: LocalCovarianceModel, region: Region, samples: int, seed: int = 0) -> list[str]:
    """Check positivity and boundedness of ``r`` and ``L`` on quasi-random samples.

    Positions come from a scrambled Sobol sequence over the region,
    directions are normalised Gaussian vectors and the ``L`` arguments are
    log-uniform on ``[1e-8, 1e8]``.  Returns human-readable findings; an
    empty list means nothing was flagged.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if not (0.0 < model.alpha <= 2.0):
        raise ValueError(f"alpha out of range: {model.alpha} not in (0, 2]")
    findings: list[str] = []
    t = region.sample(samples, seed=seed)[:samples]
    if t.shape[1] != model.dim:
        return [f"region dimension {t.shape[1]} differs from model dimension {model.dim}"]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(t.shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        rv = model.r(t, v)
    if np.any(~np.isfinite(rv)):
        findings.append(f"r is not finite at {int(np.sum(~np.isfinite(rv)))} sampled (t, v) pairs")
    if np.any(rv <= 0):
        findings.append(f"r is not positive at {int(np.sum(rv <= 0))} sampled (t, v) pairs")
    x = np.exp(qmc.scale(qmc.Sobol(1, scramble=True, seed=seed).random(samples),
                         [math.log(1e-8)], [math.log(1e8)])[:, 0])
    with np.errstate(all="ignore"):
        lv = model.L(x)
    if np.any(~np.isfinite(lv)) or np.any(lv <= 0):
        findings.append("L is not positive and finite at every sampled x > 0")
    return findings
