"""Built-in models, domains and boundaries for the worked examples.

Each builder returns the pieces needed by :mod:`fieldcross.approx`:

* ``scan``: normalised Brownian increments over a window family.
* ``scan-boundary``: the same field against a window-dependent level.
* ``multiindex``: OU-sheet limit of normalised multi-index partial sums.
* ``empirical``: the uniform empirical process, ``d`` in {1, 2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .approx import additive_H
from .model import (Boundary, LocalCovarianceModel, MinimumManifold, Region,
                    scan_window_region)


@dataclass(frozen=True)
class Preset:
    model: LocalCovarianceModel
    region: Region | None
    H: Callable[[np.ndarray], np.ndarray]
    boundary: Boundary | None = None


def scan_model() -> LocalCovarianceModel:
    """Correlation ``1 - (|u1| + |u2|) / (2 (t2 - t1))`` of normalised increments."""

    def betas(t):
        s = t[..., 1] - t[..., 0]
        b = 0.5 / s
        return np.stack([b, b], axis=-1)

    return LocalCovarianceModel.additive(betas, dim=2, name="scan-window")


def scan_preset(a: float, a1: float, a2: float) -> Preset:
    model = scan_model()
    return Preset(model, scan_window_region(a, a1, a2), additive_H(model))


def scan_boundary_preset(c: float, beta: float, a: float, a1: float, a2: float) -> Preset:
    """Level ``sqrt(c^2 - 2 beta log(t2 - t1))`` over the scan window domain."""
    model = scan_model()

    def level(t):
        return np.sqrt(c * c - 2.0 * beta * np.log(t[..., 1] - t[..., 0]))

    return Preset(model, scan_window_region(a, a1, a2), additive_H(model),
                  Boundary.general(level, c))


def multiindex_model(d: int) -> LocalCovarianceModel:
    """Correlation ``exp(-sum |u_i| / 2)``, i.e. ``beta_i = 1/2`` on every axis."""
    return LocalCovarianceModel.additive([0.5] * d, name="multiindex")


def multiindex_preset(d: int, region: Region) -> Preset:
    model = multiindex_model(d)
    return Preset(model, region, additive_H(model))


def _cdf_parts(t):
    """``F = prod t_i``, its gradient and Hessian for independent uniforms."""
    t = np.asarray(t, float)
    F = np.prod(t, axis=-1)
    d = t.shape[-1]
    grad = np.stack([np.prod(np.delete(t, i, axis=-1), axis=-1) for i in range(d)], axis=-1)
    hess = np.zeros(t.shape[:-1] + (d, d))
    for i in range(d):
        for j in range(d):
            if i != j:
                hess[..., i, j] = np.prod(np.delete(t, [i, j], axis=-1), axis=-1)
    return F, grad, hess


def empirical_model(d: int) -> LocalCovarianceModel:
    """Brownian-bridge correlation ``F(s ^ t) - F(s) F(t)`` normalised, uniform marginals.

    Near ``t`` the correlation is ``1 - sum_i dF/dt_i |u_i| / (2 F (1 - F))``.
    """

    def betas(t):
        F, grad, _ = _cdf_parts(t)
        return grad / (2.0 * F * (1.0 - F))[..., None]

    return LocalCovarianceModel.additive(betas, dim=d, name="empirical")


def empirical_shape(t):
    """``(F (1 - F))^{-1/2}``: crossing ``c`` by the process is crossing ``c * shape`` by the normalised field."""
    F = np.prod(np.asarray(t, float), axis=-1)
    return (F * (1.0 - F)) ** -0.5


def _shape_hessian(t):
    F, grad, hess = _cdf_parts(t)
    g = F * (1.0 - F)
    g1 = 1.0 - 2.0 * F
    db = -0.5 * g ** -1.5 * g1
    d2b = 0.75 * g ** -2.5 * g1 ** 2 + g ** -1.5
    return d2b * np.outer(grad, grad) + db * hess, grad


def half_level_chart(x):
    """Graph chart ``u -> (u, 1/(2u))``, ``u in [1/2, 1]``, of ``{t1 t2 = 1/2}``."""
    u = x[:, 0]
    pts = np.column_stack([u, 0.5 / u])
    return pts, np.sqrt(1.0 + 0.25 / u ** 4)


def empirical_manifold(d: int) -> MinimumManifold:
    if d == 1:
        return MinimumManifold(0, np.array([[0.5]]), lambda t: _shape_hessian(t)[0])
    if d == 2:

        def normal_hessian(t):
            h, grad = _shape_hessian(t)
            n = grad / np.linalg.norm(grad)
            return np.array([[n @ h @ n]])

        return MinimumManifold(1, half_level_chart, normal_hessian,
                               params=Region.box([0.5], [1.0]))
    raise ValueError("built-in empirical manifold charts exist for d in {1, 2}")


def empirical_preset(c: float, d: int) -> Preset:
    model = empirical_model(d)
    return Preset(model, None, additive_H(model),
                  Boundary.scaled(c, empirical_shape, empirical_manifold(d)))


def empirical_surface_integral(d: int, quad=None) -> float:
    """``int_{F = 1/2} |grad F|^{-1} prod_i dF/dt_i`` for independent uniforms."""
    mf = empirical_manifold(d)

    def f(t):
        _, grad, _ = _cdf_parts(t)
        return np.prod(grad, axis=-1) / np.linalg.norm(grad, axis=-1)

    return mf.integrate(f, quad)


def model_preset(name: str, dim: int, alpha: float = 1.0, betas=None) -> LocalCovarianceModel:
    """Model lookup used by config files and the command line."""
    if name == "constant":
        return LocalCovarianceModel.constant(dim, alpha)
    if name == "scan-window":
        if dim != 2:
            raise ValueError("scan-window model is two-dimensional")
        return scan_model()
    if name == "multiindex":
        return multiindex_model(dim)
    if name == "empirical":
        return empirical_model(dim)
    if name == "additive":
        if betas is None:
            raise ValueError("additive preset needs betas")
        return LocalCovarianceModel.additive(list(betas), dim)
    raise ValueError(f"unknown model preset {name!r}")


MODEL_PRESETS = ("constant", "scan-window", "multiindex", "empirical", "additive")

LOG2 = math.log(2.0)
