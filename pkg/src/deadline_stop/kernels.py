"""Hot inner loops: projected tridiagonal solves and first-passage scans.

Each kernel is written once as a plain loop over numpy arrays. When numba is
available (and not disabled through ``DEADLINE_STOP_DISABLE_JIT``) the loop is
compiled; otherwise the interpreted loop runs, except for the path scan which
has a vectorised numpy twin.
"""

from __future__ import annotations

import numpy as np

from ._jit import HAVE_NUMBA, njit


def _projected_thomas(lower, diag, upper, rhs, obstacle, out):
    # Forward elimination from the bottom row, projected back-substitution
    # from the top row. Exact for the obstacle problem when the contact set is
    # an upper interval of the grid.
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for j in range(1, n):
        m = diag[j] - lower[j] * cp[j - 1]
        cp[j] = upper[j] / m
        dp[j] = (rhs[j] - lower[j] * dp[j - 1]) / m
    v = dp[n - 1]
    if v < obstacle[n - 1]:
        v = obstacle[n - 1]
    out[n - 1] = v
    for j in range(n - 2, -1, -1):
        v = dp[j] - cp[j] * out[j + 1]
        if v < obstacle[j]:
            v = obstacle[j]
        out[j] = v
    return out


def _psor(lower, diag, upper, rhs, obstacle, x, omega, tol, max_iter):
    # Projected Gauss-Seidel with over-relaxation; x is updated in place.
    n = diag.shape[0]
    change = np.inf
    it = 0
    while it < max_iter:
        it += 1
        change = 0.0
        for j in range(n):
            s = rhs[j] - diag[j] * x[j]
            if j > 0:
                s -= lower[j] * x[j - 1]
            if j < n - 1:
                s -= upper[j] * x[j + 1]
            v = x[j] + omega * s / diag[j]
            if v < obstacle[j]:
                v = obstacle[j]
            d = abs(v - x[j])
            if d > change:
                change = d
            x[j] = v
        if change < tol:
            break
    return it, change


def _tridiag_matvec(lower, diag, upper, x, out):
    n = diag.shape[0]
    for j in range(n):
        s = diag[j] * x[j]
        if j > 0:
            s += lower[j] * x[j - 1]
        if j < n - 1:
            s += upper[j] * x[j + 1]
        out[j] = s
    return out


def _first_passage_loop(theta, z, dt, a, b, logit_prior, level_logit, hit, x_hit):
    # Per path: X(t_i) by exact Gaussian increments, stop at the first grid time
    # whose posterior log-odds reach the boundary log-odds.
    n, m = z.shape
    sq = np.sqrt(dt)
    tilt = 0.5 * a * (a + 2.0 * b)
    for k in range(n):
        drift = (a * theta[k] + b) * dt
        x = 0.0
        h = m
        for i in range(m):
            lo = logit_prior + a * x - tilt * (i * dt)
            if lo >= level_logit[i]:
                h = i
                break
            x += drift + sq * z[k, i]
        hit[k] = h
        x_hit[k] = x
    return hit, x_hit


def _first_passage_numpy(theta, z, dt, a, b, logit_prior, level_logit, hit, x_hit):
    n, m = z.shape
    steps = (a * theta[:, None] + b) * dt + np.sqrt(dt) * z
    x = np.zeros((n, m + 1))
    np.cumsum(steps, axis=1, out=x[:, 1:])
    tilt = 0.5 * a * (a + 2.0 * b)
    times = np.arange(m) * dt
    lo = logit_prior + a * x[:, :m] - tilt * times[None, :]
    crossed = lo >= level_logit[None, :]
    any_hit = crossed.any(axis=1)
    first = np.where(any_hit, crossed.argmax(axis=1), m)
    hit[:] = first
    x_hit[:] = x[np.arange(n), first]
    return hit, x_hit


projected_thomas = njit(_projected_thomas)
psor = njit(_psor)
tridiag_matvec = njit(_tridiag_matvec)
if HAVE_NUMBA:
    first_passage = njit(_first_passage_loop)
else:
    first_passage = _first_passage_numpy

# Reference twins kept importable for benchmarks and cross-checks.
projected_thomas_py = _projected_thomas
psor_py = _psor
first_passage_py = _first_passage_numpy

__all__ = [
    "HAVE_NUMBA",
    "first_passage",
    "first_passage_py",
    "projected_thomas",
    "projected_thomas_py",
    "psor",
    "psor_py",
    "tridiag_matvec",
]
