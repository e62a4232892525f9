"""Pickands-type constants by simulating the local limit field on a lattice.

The limit field ``W`` at position ``t`` is Gaussian with ``W(0) = 0``,

    E W(u)          = -gamma(u) / 2,
    Cov(W(u), W(v)) = (gamma(u) + gamma(v) - gamma(u - v)) / 2,

where ``gamma(u) = |u|^alpha r(t, u / |u|)``.  For the lattice supremum ``M``
over ``{k a : 0 <= k_i < m}``,

    H_K = int_0^inf e^y P{M > y} dy = E[exp(max(M, 0))] - 1,

because ``int_0^inf e^y 1{M > y} dy = e^{max(M, 0)} - 1`` pathwise.  The
sample mean of ``exp(max(M, 0)) - 1`` is therefore unbiased for the lattice
constant; ``H`` is approximated by ``K^{-d} H_K`` at the finest schedule entry.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from . import rng as _rng
from .errors import FactorizationError
from .model import LocalCovarianceModel
from .simulate import MCEstimate

DEFAULT_CAP = 4096


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice ``{k a : 0 <= k_i < m}`` covering a cube of side ``K = a m``."""

    a: float
    m: int
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("lattice spacing must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("points per axis must be a positive integer")

    @property
    def K(self) -> float:
        return self.a * self.m

    @classmethod
    def from_side(cls, K: float, a: float, cap: int = DEFAULT_CAP) -> "LatticeSpec":
        m = K / a
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ValueError("K must be an integer multiple of a")
        return cls(a, int(round(m)), cap)

    def points(self, d: int) -> np.ndarray:
        axes = [np.arange(self.m) * self.a] * d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)

    def check_size(self, d: int) -> None:
        if self.m ** d > self.cap:
            raise ValueError(f"lattice of {self.m ** d} points exceeds the cap of {self.cap}")


@dataclass(frozen=True)
class FieldSample:
    """One lattice draw; ``values`` has shape ``(m,) * d`` and ``values[0, ..., 0] == 0``."""

    values: np.ndarray
    seed: int


def _variogram(model: LocalCovarianceModel, t, u) -> np.ndarray:
    u = np.asarray(u, float)
    norm_u = np.linalg.norm(u, axis=-1)
    safe = np.where(norm_u > 0, norm_u, 1.0)
    direction = u / safe[..., None]
    out = safe ** model.alpha * model.r(np.broadcast_to(t, u.shape), direction)
    return np.where(norm_u > 0, out, 0.0)


def limit_field_moments(model: LocalCovarianceModel, t, u, v):
    """Mean of ``W(u)`` and covariance of ``W(u), W(v)``; broadcasts over rows."""
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    gu = _variogram(model, t, u)
    gv = _variogram(model, t, v)
    guv = _variogram(model, t, u - v)
    mean = -0.5 * gu
    cov = 0.5 * (gu + gv - guv)
    if mean.ndim == 0:
        return float(mean), float(cov)
    return mean, cov


def _lattice_law(model, t, lattice: LatticeSpec):
    d = model.dim
    lattice.check_size(d)
    pts = lattice.points(d)[1:]
    mean = -0.5 * _variogram(model, t, pts)
    g = _variogram(model, t, pts)
    diff = _variogram(model, t, pts[:, None, :] - pts[None, :, :])
    cov = 0.5 * (g[:, None] + g[None, :] - diff)
    return mean, cov


def _cholesky(cov: np.ndarray) -> np.ndarray:
    scale = float(np.mean(np.diag(cov))) if cov.size else 1.0
    eye = np.eye(cov.shape[0])
    for jitter in (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8):
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    lam = float(np.linalg.eigvalsh(cov)[0])
    raise FactorizationError(f"lattice covariance is not positive semidefinite; smallest eigenvalue {lam:.3e}")


def _additive_betas(model, t, d):
    b = np.asarray(model.betas(np.asarray(t, float)), float).reshape(d)
    if np.any(b <= 0):
        raise ValueError("additive betas must be positive")
    return b


def simulate_limit_field(model: LocalCovarianceModel, t, lattice: LatticeSpec, seed: int) -> FieldSample:
    """One exact joint draw of the limit field over the lattice (dense factorisation)."""
    d = model.dim
    shape = (lattice.m,) * d
    if lattice.m == 1:
        return FieldSample(np.zeros(shape), seed)
    mean, cov = _lattice_law(model, t, lattice)
    chol = _cholesky(cov)
    z = _rng.generator(seed, "limit-field").standard_normal(mean.size)
    vals = np.concatenate([[0.0], mean + chol @ z])
    return FieldSample(vals.reshape(shape), seed)


def sample_lattice_sup(model: LocalCovarianceModel, t, lattice: LatticeSpec, reps: int, seed: int,
                       workers: int = 1, method: str = "auto") -> np.ndarray:
    """Per-replication lattice suprema ``max(M, 0)`` of the limit field.

    ``method="additive"`` (the default for models with an additive
    decomposition) uses that ``W(u) = sum_i B_i(u_i)`` with independent
    Brownian motions with drift, so the lattice supremum is the sum of
    one-dimensional walk maxima.  This is the exact lattice law and is not
    subject to the lattice cap.  ``method="dense"`` factorises the full
    lattice covariance.
    """
    return _sup_matrix(model, t, [lattice], lattice, reps, seed, workers, method)[:, 0]


def _restriction(fine: LatticeSpec, coarse: LatticeSpec) -> np.ndarray:
    """Indices of ``coarse`` lattice points (per axis) inside the ``fine`` lattice."""
    step = coarse.a / fine.a
    if abs(step - round(step)) > 1e-9 or coarse.K > fine.K + 1e-9:
        raise ValueError("coarse lattice is not a sub-lattice of the fine one")
    return np.arange(coarse.m) * int(round(step))


def _sup_matrix(model, t, lattices: Sequence[LatticeSpec], fine: LatticeSpec, reps, seed, workers,
                method) -> np.ndarray:
    """Suprema on several sub-lattices of ``fine``, all from the same fine-lattice draws."""
    d = model.dim
    if method == "auto":
        method = "additive" if model.additive_betas is not None else "dense"
    if method not in ("additive", "dense"):
        raise ValueError("method must be 'auto', 'additive' or 'dense'")
    idx = [_restriction(fine, lat) for lat in lattices]
    name = f"pickands-{method}"

    if fine.m == 1:
        return np.zeros((reps, len(lattices)))

    if method == "additive":
        betas = _additive_betas(model, t, d)

        def block(g, size):
            out = np.zeros((size, len(lattices)))
            for i in range(d):
                path = np.zeros((size, fine.m))
                inc = g.standard_normal((size, fine.m - 1)) * math.sqrt(betas[i] * fine.a) - 0.5 * betas[i] * fine.a
                np.cumsum(inc, axis=1, out=path[:, 1:])
                for k, ix in enumerate(idx):
                    out[:, k] += path[:, ix].max(axis=1)
            return out

        return np.vstack(_rng.map_blocks(block, reps, seed, name, workers, 1000))

    mean, cov = _lattice_law(model, t, fine)
    chol = _cholesky(cov)
    flat = []
    for ix in idx:
        grid = np.stack(np.meshgrid(*[ix] * d, indexing="ij"), axis=-1).reshape(-1, d)
        flat.append(np.ravel_multi_index(grid.T, (fine.m,) * d))
    block_size = max(1, min(1000, 2_000_000 // mean.size))

    def block(g, size):
        z = g.standard_normal((size, mean.size))
        vals = np.zeros((size, mean.size + 1))
        vals[:, 1:] = mean + z @ chol.T
        return np.column_stack([vals[:, f].max(axis=1) for f in flat])

    return np.vstack(_rng.map_blocks(block, reps, seed, name, workers, block_size))


def _hk_from_sup(sup: np.ndarray) -> np.ndarray:
    return np.expm1(np.maximum(sup, 0.0))


def estimate_HK(model: LocalCovarianceModel, t, lattice: LatticeSpec, reps: int, seed: int,
                workers: int = 1, method: str = "auto", keep_samples: bool = False) -> MCEstimate:
    """Sample mean of ``exp(max(M, 0)) - 1`` over lattice suprema ``M``."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    t0 = time.perf_counter()
    sup = sample_lattice_sup(model, t, lattice, reps, seed, workers, method)
    vals = _hk_from_sup(sup)
    est = MCEstimate.from_values(vals, seed, time.perf_counter() - t0,
                                 extra={"K": lattice.K, "a": lattice.a, "m": lattice.m},
                                 samples=sup if keep_samples else None)
    return est


def empirical_tail_integral(sup: np.ndarray) -> float:
    """``int_0^inf e^y P_hat{M > y} dy`` for the empirical law of stored suprema.

    The empirical tail is a step function, so the integral is accumulated
    exactly between consecutive order statistics.
    """
    m = np.sort(np.maximum(np.asarray(sup, float), 0.0))
    n = m.size
    prev = np.concatenate([[0.0], m[:-1]])
    tail = (n - np.arange(n)) / n  # P_hat{M > y} for y in [m_(k-1), m_(k))
    return float(np.sum(tail * (np.exp(m) - np.exp(prev))))


def _check_schedule(schedule):
    if not schedule:
        raise ValueError("schedule must be nonempty")
    lats = [LatticeSpec.from_side(K, a) for K, a in schedule]
    for lat in lats:
        j = -math.log2(lat.a)
        if abs(j - round(j)) > 1e-12 or j < 0:
            raise ValueError("lattice spacings must be of the form 2^-j")
    for prev, cur in zip(lats, lats[1:]):
        if cur.K < prev.K or cur.a > prev.a or (cur.K == prev.K and cur.a == prev.a):
            raise ValueError("schedule must have K increasing and a decreasing")
    return lats


def estimate_H(model: LocalCovarianceModel, t, schedule: Sequence[tuple], reps: int, seed: int,
               workers: int = 1, method: str = "auto", cap: int = DEFAULT_CAP) -> MCEstimate:
    """``K^{-d} H_K`` at the finest ``(K, a)`` entry, with the whole trajectory.

    All entries are evaluated on restrictions of the same draws on the finest
    lattice, so the trajectory is pathwise monotone in ``a`` at fixed ``K``.
    """
    if reps < 100:
        raise ValueError("reps must be at least 100")
    lats = _check_schedule(schedule)
    d = model.dim
    fine = LatticeSpec(lats[-1].a, lats[-1].m, cap)
    t0 = time.perf_counter()
    sups = _sup_matrix(model, t, lats, fine, reps, seed, workers, method)
    traj = []
    for k, lat in enumerate(lats):
        vals = _hk_from_sup(sups[:, k])
        hk = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(reps))
        traj.append({"K": lat.K, "a": lat.a, "HK": hk, "HK_stderr": se,
                     "H": hk / lat.K ** d, "H_stderr": se / lat.K ** d})
    last = traj[-1]
    return MCEstimate(last["H"], last["H_stderr"], reps, seed, time.perf_counter() - t0, "mean",
                      tuple(traj), {"K": last["K"], "a": last["a"]})


def richardson_in_K(trajectory: Sequence[dict]) -> float:
    """Heuristic two-point extrapolation assuming ``K^{-d} H_K = H + b / K``.

    Uses the last two trajectory entries; only meaningful when they differ
    in ``K`` at a common spacing.
    """
    if len(trajectory) < 2:
        raise ValueError("need two trajectory entries")
    p, q = trajectory[-2], trajectory[-1]
    if q["K"] == p["K"]:
        raise ValueError("entries share the same K")
    return (q["K"] * q["H"] - p["K"] * p["H"]) / (q["K"] - p["K"])


# --- oracles for the additive alpha = 1 family ------------------------------


def reflection_HK(beta: float, K: float) -> float:
    """``E exp(max(0, sup_{[0, K]} B)) - 1`` for continuous ``B(u) = W(beta u) - beta u / 2``.

    With ``T = beta K`` the supremum law of Brownian motion with drift
    ``-1/2`` gives ``P{sup > y} = sf((y + T/2)/sqrt T) + e^{-y} sf((y - T/2)/sqrt T)``,
    so ``H_K = int_0^inf [e^y sf((y + T/2)/sqrt T) + sf((y - T/2)/sqrt T)] dy``.
    """
    T = beta * K
    if T <= 0:
        return 0.0
    s = math.sqrt(T)

    def f(y):
        return math.exp(y + norm.logsf((y + 0.5 * T) / s)) + norm.sf((y - 0.5 * T) / s)

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def lattice_walk_HK(beta: float, K: float, a: float) -> float:
    """Exact ``E exp(max_{0<=k<m} S_k) - 1`` for a Gaussian walk with steps ``N(-beta a/2, beta a)``.

    By Spitzer's identity the generating function of ``E exp(max_{k<=n} S_k)``
    is ``exp(sum_k s^k E[exp(S_k^+)] / k)``, and
    ``E exp(S_k^+) = 2 Phi(sqrt(k beta a) / 2)`` for this drift (the walk is
    a martingale under the exponential tilt).  The coefficients are
    expanded by the usual exponential-series recursion.
    """
    m = int(round(K / a))
    if abs(K / a - m) > 1e-9 * max(1, m) or m < 1:
        raise ValueError("K must be a positive multiple of a")
    n = m - 1
    if n == 0:
        return 0.0
    k = np.arange(1, n + 1)
    # c_k = E exp(S_k^+) - 1
    c = 2.0 * norm.cdf(0.5 * np.sqrt(k * beta * a)) - 1.0
    e = np.zeros(n + 1)
    e[0] = 1.0
    for j in range(1, n + 1):
        e[j] = float(np.dot(c[:j], e[j - 1::-1])) / j
    return float(e.sum()) - 1.0


def additive_lattice_HK(betas: Sequence[float], K: float, a: float) -> float:
    """Exact lattice constant for ``W(u) = sum_i B_i(u_i)``: ``prod_i (1 + H_i) - 1``."""
    return float(np.prod([1.0 + lattice_walk_HK(b, K, a) for b in betas]) - 1.0)
