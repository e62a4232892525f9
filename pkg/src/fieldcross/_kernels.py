"""Compiled inner loops for the Monte Carlo estimators."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def scan_max(paths, w_lo, w_hi):
    """Row-wise ``max_{w_lo <= w <= w_hi, j} (S_j - S_{j-w}) / sqrt(w)``.

    ``paths`` holds partial sums with a leading zero column.
    """
    reps, n1 = paths.shape
    out = np.empty(reps)
    for r in range(reps):
        best = -np.inf
        for w in range(w_lo, w_hi + 1):
            m = -np.inf
            for j in range(w, n1):
                v = paths[r, j] - paths[r, j - w]
                if v > m:
                    m = v
            v = m / math.sqrt(w)
            if v > best:
                best = v
        out[r] = best
    return out


@njit(cache=True, nogil=True)
def _local_counts(T, pi, oy, i0, i1, j0, j1, base):
    # T[p, q] = C(i0 + p, j0 + q) where C(i, j) = #{k < i : pi[k] < j}
    T[0, 0] = base
    for q in range(1, j1 - j0 + 1):
        T[0, q] = T[0, q - 1] + (1 if oy[j0 + q - 1] < i0 else 0)
    for p in range(1, i1 - i0 + 1):
        y = pi[i0 + p - 1]
        for q in range(0, j1 - j0 + 1):
            T[p, q] = T[p - 1, q] + (1 if y < j0 + q else 0)


@njit(cache=True, nogil=True)
def empirical_sup2(x, y, block, threshold, two_sided):
    """Supremum of ``F_n - F`` (times ``n``) for a bivariate uniform sample.

    The one-sided value is ``max_{i,j} C(i,j) - n x_(i) y_(j)`` over the
    rank grid; the two-sided value also considers
    ``-(C(i,j) - n x_(i+1) y_(j+1))`` (left limits).  Blocks of ``block``
    ranks per axis get cheap upper bounds from 2-D prefix counts and only
    blocks whose bound beats ``max(best, threshold)`` are scanned exactly.

    The returned value is exact whenever it exceeds ``threshold``; otherwise
    it is a lower bound that does not exceed ``threshold``.
    """
    n = x.size
    ox = np.argsort(x)
    xs = x[ox]
    yx = y[ox]
    oy = np.argsort(yx)
    ys = yx[oy]
    pi = np.empty(n, np.int64)
    for r in range(n):
        pi[oy[r]] = r
    # X1[i] = x_(i+1) with X1[n] = 1, X0[i] = x_(i) with X0[0] = 0
    X0 = np.zeros(n + 1)
    Y0 = np.zeros(n + 1)
    X1 = np.ones(n + 1)
    Y1 = np.ones(n + 1)
    for i in range(n):
        X0[i + 1] = xs[i]
        Y0[i + 1] = ys[i]
        X1[i] = xs[i]
        Y1[i] = ys[i]
    g = (n + block - 1) // block
    cuts = np.empty(g + 1, np.int64)
    for k in range(g + 1):
        cuts[k] = min(k * block, n)
    hist = np.zeros((g + 1, g + 1), np.int64)
    for k in range(n):
        hist[k // block + 1, pi[k] // block + 1] += 1
    for I in range(1, g + 1):
        for J in range(g + 1):
            hist[I, J] += hist[I - 1, J]
    for I in range(g + 1):
        for J in range(1, g + 1):
            hist[I, J] += hist[I, J - 1]
    Cc = hist  # Cc[I, J] = C(cuts[I], cuts[J])
    fn = float(n)

    best = 0.0
    # exact corner values
    for I in range(g + 1):
        for J in range(g + 1):
            i = cuts[I]
            j = cuts[J]
            c = float(Cc[I, J])
            if i >= 1 and j >= 1:
                v = c - fn * X0[i] * Y0[j]
                if v > best:
                    best = v
            if two_sided:
                v = fn * X1[i] * Y1[j] - c
                if v > best:
                    best = v
    # edges i = n or j = n of the lower envelope are one-dimensional
    if two_sided:
        for j in range(n + 1):
            v = fn * Y1[j] - j
            if v > best:
                best = v
        for i in range(n + 1):
            v = fn * X1[i] - i
            if v > best:
                best = v

    T = np.empty((block + 1, block + 1), np.int64)
    for I in range(g):
        i0 = cuts[I]
        i1 = cuts[I + 1]
        for J in range(g):
            j0 = cuts[J]
            j1 = cuts[J + 1]
            bar = max(best, threshold)
            up = float(Cc[I + 1, J + 1]) - fn * X0[i0 + 1] * Y0[j0 + 1]
            lo = 0.0
            if two_sided:
                lo = fn * X1[i1 - 1] * Y1[j1 - 1] - float(Cc[I, J])
            if up <= bar and lo <= bar:
                continue
            _local_counts(T, pi, oy, i0, i1, j0, j1, Cc[I, J])
            if up > bar:
                for p in range(1, i1 - i0 + 1):
                    xv = fn * X0[i0 + p]
                    for q in range(1, j1 - j0 + 1):
                        v = float(T[p, q]) - xv * Y0[j0 + q]
                        if v > best:
                            best = v
            if two_sided and lo > bar:
                for p in range(0, i1 - i0):
                    xv = fn * X1[i0 + p]
                    for q in range(0, j1 - j0):
                        v = xv * Y1[j0 + q] - float(T[p, q])
                        if v > best:
                            best = v
    return best


@njit(cache=True, nogil=True)
def empirical_sup2_brute(x, y, two_sided):
    """O(n^3) reference for :func:`empirical_sup2`, used in tests."""
    n = x.size
    xs = np.sort(x)
    ys = np.sort(y)
    best = 0.0
    for a in range(n + 1):
        for b in range(n + 1):
            xu = xs[a - 1] if a >= 1 else 0.0
            yu = ys[b - 1] if b >= 1 else 0.0
            xl = xs[a] if a < n else 1.0
            yl = ys[b] if b < n else 1.0
            cnt = 0
            for k in range(n):
                if x[k] <= xu and y[k] <= yu:
                    cnt += 1
            if a >= 1 and b >= 1:
                v = cnt - n * xu * yu
                if v > best:
                    best = v
            if two_sided:
                v = n * xl * yl - cnt
                if v > best:
                    best = v
    return best
