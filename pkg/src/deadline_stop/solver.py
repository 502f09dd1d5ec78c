"""Backward induction for the value function on a (t, pi) grid.

Each time step solves the obstacle problem

    min(-(V_t + (a^2/2) pi^2 (1-pi)^2 V_pipi), V - G) = 0

with a theta-weighted implicit step. The complementarity system is solved by
a projected Thomas sweep and then polished by PSOR, whose stopping rule is
the convergence contract reported back to the caller.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import AssumptionError, ConvergenceError, ParameterError
from .model import DiscountPair, ProblemSpec, validate_assumptions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    nt: int = 2000
    npi: int = 2000
    theta_weight: float = 0.5
    psor_tol: float = 1e-10
    psor_max_iter: int = 20_000
    horizon_tail_tol: float = 1e-5
    omega: float = 1.5
    rannacher_steps: int = 2
    lcp_method: str = "thomas+psor"
    # t_k = T (1 - (1 - k/nt)^q): q = 1 is uniform, q > 1 refines toward T
    time_grading: float = 2.0
    # infinite horizon only
    t0: float = 1.0
    max_doublings: int = 12
    report_horizon: float | None = None

    def __post_init__(self):
        if self.nt < 1 or self.npi < 3:
            raise ParameterError("need nt >= 1 and npi >= 3")
        if not (0.0 <= self.theta_weight <= 1.0):
            raise ParameterError("theta_weight must lie in [0, 1]")
        if self.psor_tol <= 0:
            raise ParameterError("psor_tol must be positive")
        if not (0 < self.omega < 2):
            raise ParameterError("omega must lie in (0, 2)")
        if self.time_grading < 1:
            raise ParameterError("time_grading must be >= 1")
        if self.lcp_method not in ("thomas+psor", "psor"):
            raise ParameterError(f"unknown lcp_method {self.lcp_method!r}")

    @property
    def contact_tol(self) -> float:
        return max(self.psor_tol, 1e-10)


@dataclass
class ValueSurface:
    t_grid: np.ndarray
    pi_grid: np.ndarray
    v: np.ndarray
    g: np.ndarray
    stop_mask: np.ndarray
    a: float
    contact_tol: float
    psor_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    horizon_sequence: list[float] = field(default_factory=list)
    sup_differences: list[float] = field(default_factory=list)
    min_increments: list[float] = field(default_factory=list)

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1])

    @property
    def dpi(self) -> float:
        return float(self.pi_grid[1] - self.pi_grid[0])

    def value_at(self, t: float, pi: float) -> float:
        """Bilinear interpolation of V."""
        i = int(np.clip(np.searchsorted(self.t_grid, t) - 1, 0, self.t_grid.size - 2))
        w = (t - self.t_grid[i]) / (self.t_grid[i + 1] - self.t_grid[i])
        row = (1 - w) * self.v[i] + w * self.v[i + 1]
        return float(np.interp(pi, self.pi_grid, row))


def gain(pair: DiscountPair, t, pi):
    """``max(c1(t) pi - c0(t) (1 - pi), 0)``; broadcasts over ``t`` and ``pi``."""
    c0 = np.asarray(pair.c0.value(t))
    c1 = np.asarray(pair.c1.value(t))
    out = np.maximum(c1 * np.asarray(pi) - c0 * (1.0 - np.asarray(pi)), 0.0)
    return float(out) if out.ndim == 0 else out


def effective_horizon(pair: DiscountPair, horizon: float, grid_n: int = 10_001) -> float:
    """First zero of ``min(c0, c1)`` when it falls inside ``(0, horizon)``."""
    t = np.linspace(0.0, horizon, grid_n)
    m = np.minimum(pair.c0.value(t), pair.c1.value(t))
    zero = np.flatnonzero(m <= 0)
    if zero.size == 0 or zero[0] == grid_n - 1:
        return horizon
    k = zero[0]
    if k == 0:
        raise ParameterError("a discount vanishes at t = 0")
    f = lambda s: min(pair.c0.value(s), pair.c1.value(s))
    return float(brentq(f, t[k - 1], t[k])) if f(t[k]) < 0 else float(t[k])


def _check(spec: ProblemSpec, horizon: float):
    rep = validate_assumptions(spec.discounts, horizon)
    if not rep.ok:
        raise AssumptionError(f"discount assumptions fail ({spec.discounts.assumption_mode} mode):\n{rep.table()}", rep)
    return rep


def solve_finite(spec: ProblemSpec, grid: GridSpec, *, check_assumptions: bool = True) -> ValueSurface:
    """Value surface on ``[0, T] x [0, 1]`` by backward induction.

    Raises :class:`ConvergenceError` if PSOR does not reach ``psor_tol``
    within ``psor_max_iter`` sweeps at some step and
    :class:`AssumptionError` if the discount pair fails validation.
    """
    if spec.infinite:
        raise ParameterError("solve_finite needs a finite horizon; use solve_infinite")
    pair = spec.discounts
    if check_assumptions:
        _check(spec, spec.horizon)
    T = effective_horizon(pair, spec.horizon)
    if T < spec.horizon:
        log.info("horizon clipped from %g to %g where a discount vanishes", spec.horizon, T)
    return _backward(spec.a, pair, T, grid, grid.nt, grid.time_grading)


def time_nodes(T: float, nt: int, grading: float = 1.0) -> np.ndarray:
    s = np.linspace(0.0, 1.0, nt + 1)
    if grading == 1.0:
        return T * s
    t = T * (1.0 - (1.0 - s) ** grading)
    t[-1] = T
    return t


def _backward(a: float, pair: DiscountPair, T: float, grid: GridSpec, nt: int, grading: float) -> ValueSurface:
    npi = grid.npi
    M = npi + 1
    t_grid = time_nodes(T, nt, grading)
    pi_grid = np.linspace(0.0, 1.0, M + 1)
    dpi = 1.0 / M
    c0 = np.asarray(pair.c0.value(t_grid), dtype=float)
    c1 = np.asarray(pair.c1.value(t_grid), dtype=float)
    g = np.maximum(c1[:, None] * pi_grid[None, :] - c0[:, None] * (1.0 - pi_grid[None, :]), 0.0)
    v = np.empty_like(g)
    v[nt] = g[nt]

    pin = pi_grid[1:-1]
    alpha = 0.5 * a * a * pin * pin * (1.0 - pin) ** 2 / (dpi * dpi)
    iters = np.zeros(nt, dtype=np.int64)
    x = np.empty(npi)
    lap = np.empty(npi)
    use_thomas = grid.lcp_method == "thomas+psor"

    for n in range(nt - 1, -1, -1):
        theta = 1.0 if (nt - 1 - n) < grid.rannacher_steps else grid.theta_weight
        dt = t_grid[n + 1] - t_grid[n]
        k = theta * dt * alpha
        lower = -k
        diag = 1.0 + 2.0 * k
        upper = -k.copy()
        lower[0] = 0.0
        upper[-1] = 0.0
        nxt = v[n + 1]
        lap[:] = nxt[2:] - 2.0 * nxt[1:-1] + nxt[:-2]
        rhs = nxt[1:-1] + (1.0 - theta) * dt * alpha * lap
        top = c1[n]
        rhs[-1] += k[-1] * top
        obstacle = g[n, 1:-1]
        if use_thomas:
            kernels.projected_thomas(lower, diag, upper, rhs, obstacle, x)
        else:
            np.maximum(nxt[1:-1], obstacle, out=x)
        it, change = kernels.psor(lower, diag, upper, rhs, obstacle, x, grid.omega, grid.psor_tol, grid.psor_max_iter)
        iters[n] = it
        if change >= grid.psor_tol:
            raise ConvergenceError(
                f"PSOR did not converge at t={t_grid[n]:.6g}: last change {change:.3e} after {it} sweeps",
                t=float(t_grid[n]),
                residual=float(change),
            )
        v[n, 0] = 0.0
        v[n, 1:-1] = x
        v[n, -1] = top

    stop = (v - g) <= grid.contact_tol * (1.0 + np.abs(g))
    return ValueSurface(t_grid, pi_grid, v, g, stop, a, grid.contact_tol, iters)


def solve_infinite(spec: ProblemSpec, grid: GridSpec, *, check_assumptions: bool = True) -> ValueSurface:
    """Infinite-horizon value by solving horizons ``T_n = t0 * 2^n``.

    The uniform time step ``t0 / nt`` is shared by every truncation so grid
    nodes coincide (``time_grading`` is ignored here). Stops once the
    sup-difference between consecutive truncations over ``[0, T_n / 2]`` (or the fixed ``report_horizon``) drops below
    ``horizon_tail_tol``; the last surface restricted to that window is
    returned with the difference sequence and the minimum node increments.
    """
    if not spec.infinite:
        raise ParameterError("solve_infinite needs an infinite horizon")
    if check_assumptions:
        _check(spec, math.inf)
    pair = spec.discounts
    prev: ValueSurface | None = None
    horizons: list[float] = []
    diffs: list[float] = []
    mins: list[float] = []
    for n in range(grid.max_doublings + 1):
        T = grid.t0 * 2.0**n
        cur = _backward(spec.a, pair, T, grid, grid.nt * 2**n, 1.0)
        horizons.append(T)
        if prev is not None:
            window = grid.report_horizon if grid.report_horizon is not None else prev.horizon / 2.0
            rows = int(round(window / T * (cur.t_grid.size - 1)))
            rows = min(rows, prev.t_grid.size - 1)
            delta = cur.v[: rows + 1] - prev.v[: rows + 1]
            diffs.append(float(np.max(np.abs(delta))))
            mins.append(float(np.min(delta)))
            log.debug("T=%g window=%g sup diff=%.3e", T, window, diffs[-1])
            if diffs[-1] < grid.horizon_tail_tol:
                return ValueSurface(
                    cur.t_grid[: rows + 1],
                    cur.pi_grid,
                    cur.v[: rows + 1],
                    cur.g[: rows + 1],
                    cur.stop_mask[: rows + 1],
                    cur.a,
                    cur.contact_tol,
                    cur.psor_iterations[:rows],
                    horizons,
                    diffs,
                    mins,
                )
        prev = cur
    raise ConvergenceError(
        f"infinite-horizon sequence not within {grid.horizon_tail_tol:g} after {grid.max_doublings} doublings "
        f"(last sup difference {diffs[-1] if diffs else float('nan'):.3e})",
        residual=diffs[-1] if diffs else None,
    )


def solve(spec: ProblemSpec, grid: GridSpec, *, check_assumptions: bool = True) -> ValueSurface:
    if spec.infinite:
        return solve_infinite(spec, grid, check_assumptions=check_assumptions)
    return solve_finite(spec, grid, check_assumptions=check_assumptions)


def pde_residual(surface: ValueSurface, pair: DiscountPair) -> np.ndarray:
    """Central-difference residual ``V_t + (a^2/2) pi^2 (1-pi)^2 V_pipi``.

    The stencil differs from the time-stepping scheme (three-point time
    derivative on the possibly non-uniform time grid, one-sided in the first
    row), so it measures consistency rather than restating the scheme.
    Stopping nodes and the terminal row get ``V - G``; the two edge columns
    get their Dirichlet violation.
    """
    v, g = surface.v, surface.g
    t = surface.t_grid
    pin = surface.pi_grid[1:-1]
    dpi = surface.dpi
    coef = 0.5 * surface.a**2 * pin * pin * (1.0 - pin) ** 2
    res = v - g
    lv = coef[None, :] * (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / (dpi * dpi)
    vt = np.empty((t.size - 1, pin.size))
    vt[0] = (v[1, 1:-1] - v[0, 1:-1]) / (t[1] - t[0])
    if t.size > 2:
        h0 = (t[1:-1] - t[:-2])[:, None]
        h1 = (t[2:] - t[1:-1])[:, None]
        vt[1:] = (
            -h1 / (h0 * (h0 + h1)) * v[:-2, 1:-1]
            + (h1 - h0) / (h0 * h1) * v[1:-1, 1:-1]
            + h0 / (h1 * (h0 + h1)) * v[2:, 1:-1]
        )
    cont = vt + lv[:-1]
    res[:-1, 1:-1] = np.where(surface.stop_mask[:-1, 1:-1], res[:-1, 1:-1], cont)
    res[:, 0] = v[:, 0]
    res[:, -1] = v[:, -1] - np.asarray(pair.c1.value(t))
    return res


def smooth_fit_gap(surface: ValueSurface, boundary) -> np.ndarray:
    """Left difference quotient of V at the first contact node minus the gain slope.

    NaN marks times where the contact node is a grid endpoint.
    """
    out = np.full(boundary.t_grid.size, np.nan)
    M = surface.pi_grid.size - 1
    dpi = surface.dpi
    for i, j in enumerate(boundary.contact_index):
        if j <= 1 or j >= M:
            continue
        slope = boundary.c0[i] + boundary.c1[i]
        out[i] = (surface.v[i, j] - surface.v[i, j - 1]) / dpi - slope
    return out


def with_grid(grid: GridSpec, **kw) -> GridSpec:
    return replace(grid, **kw)
