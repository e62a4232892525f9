"""Monte Carlo and exact-distribution oracles for the tail approximations.

Every estimator draws replications in fixed-size blocks from named Philox
streams (see :mod:`fieldcross.rng`), so results are bit-for-bit identical for
a given ``(seed, reps)`` whatever the number of workers.

All sup-over-grid estimators under-estimate the continuum supremum; the grid
checks emit :class:`~fieldcross.errors.GridResolutionWarning` when the step is
coarse relative to the correlation length at level ``c``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.signal import lfilter
from scipy.sparse.linalg import splu
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from . import rng as _rng
from ._kernels import empirical_sup2, scan_max
from .errors import GridResolutionWarning
from .model import Region


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate with its standard error.

    ``kind="probability"`` estimates are exceedance frequencies with the
    binomial standard error ``sqrt(p (1 - p) / reps)``; ``kind="mean"``
    estimates use the sample standard deviation.
    """

    estimate: float
    stderr: float
    reps: int
    seed: int
    wall_time: float = 0.0
    kind: str = "probability"
    trajectory: tuple = ()
    extra: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "probability":
            if not 0.0 <= self.estimate <= 1.0:
                raise ValueError("probability estimate outside [0, 1]")
            expected = math.sqrt(self.estimate * (1.0 - self.estimate) / self.reps)
            if self.stderr != expected:
                raise ValueError("stderr must equal sqrt(p (1 - p) / reps)")

    @property
    def p_hat(self) -> float:
        return self.estimate

    @classmethod
    def from_indicators(cls, hits: np.ndarray, seed: int, wall_time: float = 0.0, **kw) -> "MCEstimate":
        reps = int(hits.size)
        if reps == 0:
            raise ValueError("no replications")
        p = float(np.count_nonzero(hits)) / reps
        return cls(p, math.sqrt(p * (1.0 - p) / reps), reps, seed, wall_time, "probability", **kw)

    @classmethod
    def from_values(cls, values: np.ndarray, seed: int, wall_time: float = 0.0, **kw) -> "MCEstimate":
        values = np.asarray(values, float)
        reps = int(values.size)
        if reps == 0:
            raise ValueError("no replications")
        se = float(values.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        return cls(float(values.mean()), se, reps, seed, wall_time, "mean", **kw)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "type": "MCEstimate",
            "kind": self.kind,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "reps": self.reps,
            "seed": self.seed,
            "wall_time": self.wall_time if timing else None,
        }
        if self.trajectory:
            out["trajectory"] = list(self.trajectory)
        if self.extra:
            out["extra"] = dict(self.extra)
        return out


def _check_reps(reps: int, minimum: int):
    if reps < minimum:
        raise ValueError(f"reps must be at least {minimum}")


# --- Brownian scan ----------------------------------------------------------


@dataclass(frozen=True)
class ScanConfig:
    """Window family ``{(t1, t2): 0 <= t1 < t2 <= a, a1 <= t2 - t1 <= a2}`` on a grid of step ``h``.

    ``a1 == a2`` is accepted and scans the single window length.
    """

    a: float
    a1: float
    a2: float
    h: float

    def __post_init__(self):
        if not (0 < self.a1 <= self.a2 <= self.a):
            raise ValueError("need 0 < a1 <= a2 <= a")
        if not self.h > 0:
            raise ValueError("grid step must be positive")
        if abs(self.a / self.h - round(self.a / self.h)) > 1e-9 * (self.a / self.h):
            raise ValueError("grid step must divide a")
        if self.w_lo > self.w_hi:
            raise ValueError("no grid window length between a1 and a2")

    @property
    def steps(self) -> int:
        return int(round(self.a / self.h))

    @property
    def w_lo(self) -> int:
        return max(1, math.ceil(self.a1 / self.h - 1e-9))

    @property
    def w_hi(self) -> int:
        return math.floor(self.a2 / self.h + 1e-9)

    def check_resolution(self, c: float) -> None:
        """Warn when ``h`` exceeds a tenth of the correlation length ``a1 / (2 c^2)``."""
        limit = self.a1 / (2.0 * c * c) / 10.0
        if self.h > limit:
            warnings.warn(f"scan grid step {self.h:g} exceeds {limit:.3g}; the estimate is biased low",
                          GridResolutionWarning, stacklevel=3)


def scan_statistics(config: ScanConfig, reps: int, seed: int, workers: int = 1,
                    block_size: int = 200) -> np.ndarray:
    """Per-replication scan supremum ``max (W(t2) - W(t1)) / sqrt(t2 - t1)`` over the grid.

    Increments are drawn with unit variance: the grid step cancels from
    the normalised statistic, so configurations related by Brownian scaling
    produce identical draws.
    """
    n = config.steps
    w_lo, w_hi = config.w_lo, config.w_hi

    def block(g: np.random.Generator, size: int) -> np.ndarray:
        paths = np.zeros((size, n + 1))
        np.cumsum(g.standard_normal((size, n)), axis=1, out=paths[:, 1:])
        return scan_max(paths, w_lo, w_hi)

    return _rng.concat_blocks(block, reps, seed, "scan", workers, block_size)


def brownian_scan_mc(c: float, config: ScanConfig, reps: int, seed: int, workers: int = 1) -> MCEstimate:
    """Probability that some gridded window's normalised increment exceeds ``c``."""
    _check_reps(reps, 1000)
    config.check_resolution(c)
    t0 = time.perf_counter()
    stats = scan_statistics(config, reps, seed, workers)
    return MCEstimate.from_indicators(stats > c, seed, time.perf_counter() - t0, samples=stats)


# --- Ornstein-Uhlenbeck sheet ------------------------------------------------


def _ou_axes(lower, upper, step):
    sizes, rhos = [], []
    for lo, hi in zip(lower, upper):
        m = int(round((hi - lo) / step))
        sizes.append(m + 1)
        rhos.append(math.exp(-0.5 * (hi - lo) / m) if m > 0 else 0.0)
    return sizes, rhos


def ou_sheet_sample(g: np.random.Generator, size: int, sizes: Sequence[int], rhos: Sequence[float]) -> np.ndarray:
    """Stationary fields with covariance ``prod_i rho_i^{|k_i - l_i|}`` on a grid.

    Each axis is an exact first-order autoregression: the first innovation
    is standard normal, the rest are scaled by ``sqrt(1 - rho^2)``.
    """
    z = g.standard_normal((size, *sizes))
    for ax, rho in enumerate(rhos, start=1):
        if sizes[ax - 1] == 1:
            continue
        idx = [slice(None)] * z.ndim
        idx[ax] = slice(1, None)
        z[tuple(idx)] *= math.sqrt(1.0 - rho * rho)
        z = lfilter([1.0], [1.0, -rho], z, axis=ax)
    return z


def ou_field_mc(c: float, region: Region, grid_step: float, reps: int, seed: int,
                workers: int = 1, block_size: int | None = None) -> MCEstimate:
    """Exceedance probability of the OU sheet ``corr = exp(-sum |u_i| / 2)`` on a lattice.

    The lattice spans the region's single box with ``round(side / step)``
    intervals per axis; a side shorter than half a step collapses to one point.
    """
    _check_reps(reps, 1)
    if region.chart is not None or len(region.rects) != 1:
        raise ValueError("ou_field_mc needs a single unmapped rectangle")
    lower, upper = region.rects[0]
    d = len(lower)
    if d not in (1, 2):
        raise ValueError("ou_field_mc supports d in {1, 2}")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if grid_step > 1.0 / (2.0 * c * c) / 5.0:
        warnings.warn(f"OU grid step {grid_step:g} exceeds a fifth of the correlation length",
                      GridResolutionWarning, stacklevel=2)
    sizes, rhos = _ou_axes(lower, upper, grid_step)
    points = int(np.prod(sizes))
    if block_size is None:
        block_size = max(1, min(1000, 2_000_000 // points))
    t0 = time.perf_counter()

    def block(g: np.random.Generator, size: int) -> np.ndarray:
        z = ou_sheet_sample(g, size, sizes, rhos)
        return z.reshape(size, -1).max(axis=1)

    stats = _rng.concat_blocks(block, reps, seed, f"ou{d}", workers, block_size)
    return MCEstimate.from_indicators(stats > c, seed, time.perf_counter() - t0, samples=stats)


def ou_exceedance_continuum(c: float, T: float, x_min: float = -9.0, nx: int = 4000, nt: int = 4000) -> float:
    """``P{sup_[0, T] X > c}`` for the stationary OU process ``dX = -X/2 dt + dW``.

    Solves the backward equation ``u_t = -x/2 u_x + u_xx/2`` on ``(x_min, c)``
    with ``u = 1`` at ``c`` (Crank-Nicolson after four quarter-step implicit
    Euler steps) and integrates the hitting probability against the standard
    normal start.  Accuracy is about 1e-5 relative at the defaults.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    x = np.linspace(x_min, c, nx + 1)
    h = x[1] - x[0]
    xi = x[1:-1]
    lower = 0.5 / h ** 2 + 0.25 * xi / h
    upper = 0.5 / h ** 2 - 0.25 * xi / h
    A = sparse.diags([lower[1:], np.full(xi.size, -1.0 / h ** 2), upper[:-1]], [-1, 0, 1], format="csc")
    bc = np.zeros(xi.size)
    bc[-1] = upper[-1]
    eye = sparse.identity(xi.size, format="csc")
    u = np.zeros(xi.size)
    if T > 0:
        dt = T / nt
        start = splu((eye - 0.25 * dt * A).tocsc())
        for _ in range(4):
            u = start.solve(u + 0.25 * dt * bc)
        implicit = splu((eye - 0.5 * dt * A).tocsc())
        explicit = (eye + 0.5 * dt * A).tocsr()
        for _ in range(nt - 1):
            u = implicit.solve(explicit @ u + dt * bc)
    return float(norm.sf(c) + np.trapezoid(norm.pdf(xi) * u, xi))


def ou_exceedance_lattice(c: float, T: float, step: float, nodes: int = 2000, x_min: float = -9.0) -> float:
    """``P{max_k X(k step) > c}`` over ``0 <= k step <= T`` for the same process.

    Iterates the Gaussian transition kernel of the autoregression on a
    Gauss-Legendre discretisation of ``(x_min, c)``.
    """
    m = int(round(T / step))
    rho = math.exp(-0.5 * step)
    s = math.sqrt(1.0 - rho * rho)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    y = 0.5 * (c - x_min) * gx + 0.5 * (c + x_min)
    w = 0.5 * (c - x_min) * gw
    kern = norm.pdf((y[None, :] - rho * y[:, None]) / s) / s * w[None, :]
    v = np.ones(nodes)
    for _ in range(m):
        v = kern @ v
    return float(1.0 - np.sum(norm.pdf(y) * w * v))


# --- empirical process -------------------------------------------------------


def _ks1_block(n: int, two_sided: bool):
    i = np.arange(1, n + 1)

    def block(g: np.random.Generator, size: int) -> np.ndarray:
        e = g.standard_exponential((size, n + 1))
        s = np.cumsum(e, axis=1)
        u = s[:, :n] / s[:, n:]
        stat = np.max(i / n - u, axis=1)
        if two_sided:
            stat = np.maximum(stat, np.max(u - (i - 1) / n, axis=1))
        return np.maximum(stat, 0.0) * math.sqrt(n)

    return block


def _ks2_block(n: int, two_sided: bool, threshold: float, grid_block: int):
    def block(g: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        for k in range(size):
            pts = g.random((n, 2))
            out[k] = empirical_sup2(pts[:, 0].copy(), pts[:, 1].copy(), grid_block,
                                    threshold * n, two_sided) / math.sqrt(n)
        return out

    return block


def empirical_process_mc(n: int, d: int, c: float, two_sided: bool = False, reps: int = 10000,
                         seed: int = 0, marginals: str = "independent-uniform", workers: int = 1,
                         exact_sup: bool = False) -> MCEstimate:
    """Probability that ``sqrt(n) sup (F_n - F)`` exceeds ``c`` (or ``|.|`` if two-sided).

    For ``d = 1`` the supremum is attained at order statistics, drawn from
    normalised exponential spacings.  For ``d = 2`` the sup over the rank grid
    of sample coordinates is computed exactly by block bounds; unless
    ``exact_sup`` is set, blocks that cannot exceed ``c`` are skipped, so
    stored per-replication values are exact only above ``c``.
    """
    _check_reps(reps, 1)
    if d not in (1, 2):
        raise ValueError("empirical_process_mc supports d in {1, 2}")
    if marginals != "independent-uniform":
        raise ValueError("only the independent-uniform marginal preset is available")
    if n < 1:
        raise ValueError("n must be positive")
    if c >= n ** (1.0 / 6.0):
        warnings.warn(f"c={c:g} is not small against n^(1/6)={n ** (1 / 6):.3g}; "
                      "the asymptotic regime may not apply", UserWarning, stacklevel=2)
    t0 = time.perf_counter()
    if d == 1:
        block_size = max(1, min(1000, 4_000_000 // (n + 1)))
        stats = _rng.concat_blocks(_ks1_block(n, two_sided), reps, seed,
                                   "ks1-two" if two_sided else "ks1", workers, block_size)
    else:
        thr = -np.inf if exact_sup else c / math.sqrt(n)
        grid_block = max(8, int(math.sqrt(n)) // 4)
        stats = _rng.concat_blocks(_ks2_block(n, two_sided, thr, grid_block), reps, seed,
                                   "ks2-two" if two_sided else "ks2", workers, 500)
    return MCEstimate.from_indicators(stats > c, seed, time.perf_counter() - t0, samples=stats)


def exact_ks_one_sided(n: int, c: float) -> float:
    """Exact ``P{sqrt(n) sup (F_n - F) > c}`` for a continuous ``F``.

    Uses the finite-sample sum
    ``eps sum_{j <= n(1-eps)} C(n, j) (1 - eps - j/n)^{n-j} (eps + j/n)^{j-1}``
    with ``eps = c / sqrt(n)``, accumulated in log space.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if c <= 0:
        return 1.0
    eps = c / math.sqrt(n)
    if eps >= 1.0:
        return 0.0
    j = np.arange(0, math.floor(n * (1.0 - eps)) + 1, dtype=float)
    a = 1.0 - eps - j / n
    keep = a > 0
    j, a = j[keep], a[keep]
    logt = (gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
            + (n - j) * np.log(a) + (j - 1) * np.log(eps + j / n))
    total = math.log(eps) + float(logsumexp(logt)) if j.size else -np.inf
    return float(min(1.0, math.exp(total)))


# --- multi-index partial sums -----------------------------------------------


@dataclass(frozen=True)
class MultiIndexDemo:
    """Normalised partial-sum field ``X(log n) = |n|^{-1/2} S_n`` and its LIL ratio."""

    field: np.ndarray
    lil_stat: float
    nmax: tuple
    seed: int
    dist: str

    def to_dict(self) -> dict:
        return {"type": "MultiIndexDemo", "nmax": list(self.nmax), "seed": self.seed,
                "dist": self.dist, "lil_stat": self.lil_stat,
                "field_max": float(self.field.max()), "field_min": float(self.field.min())}


_DISTS = ("rademacher", "uniform-centered", "standard-normal")


def multiindex_sum_demo(nmax: Sequence[int], dist: str = "standard-normal", seed: int = 0,
                        max_cells: int = 10_000_000) -> MultiIndexDemo:
    """Materialise ``S_n`` over ``[1, nmax]`` and report ``max S_n / sqrt(2 d |n| log log |n|)``.

    The ratio is taken over ``|n| = prod n_i >= 16``; it is ``nan`` when the
    box holds no such index.
    """
    nmax = tuple(int(k) for k in nmax)
    if not nmax or any(k < 1 for k in nmax):
        raise ValueError("nmax entries must be positive")
    cells = int(np.prod(nmax, dtype=np.int64))
    if cells > max_cells:
        raise ValueError(f"index box of {cells} cells exceeds the memory cap {max_cells}")
    if dist not in _DISTS:
        raise ValueError(f"dist must be one of {_DISTS}")
    g = _rng.generator(seed, "multiindex")
    if dist == "rademacher":
        y = 2.0 * g.integers(0, 2, size=nmax) - 1.0
    elif dist == "uniform-centered":
        y = g.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=nmax)
    else:
        y = g.standard_normal(nmax)
    s = y
    for ax in range(len(nmax)):
        s = np.cumsum(s, axis=ax)
    grids = np.meshgrid(*[np.arange(1, k + 1, dtype=float) for k in nmax], indexing="ij")
    size = np.prod(grids, axis=0)
    field = s / np.sqrt(size)
    mask = size >= 16
    d = len(nmax)
    if np.any(mask):
        lil = float(np.max(s[mask] / np.sqrt(2.0 * d * size[mask] * np.log(np.log(size[mask])))))
    else:
        lil = float("nan")
    return MultiIndexDemo(field, lil, nmax, seed, dist)
