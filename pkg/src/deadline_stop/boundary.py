"""Free boundary extraction and its verification.

The stopping boundary ``b(t)`` is read off a solved surface, mapped to the
log-price scale ``log(c1 b / ((1 - b) c0))`` in which it is monotone under
the beta-monotonicity conditions, and checked against the integral equation
it must satisfy. An independent fixed-point solver works on that equation
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit, ndtr

from .errors import DegenerateError, DomainError, ParameterError
from .model import DiscountPair, ProblemSpec, ValidationReport
from .solver import ValueSurface


@dataclass
class Boundary:
    t_grid: np.ndarray
    b: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    horizon: float
    b_terminal: float
    dpi: float = 0.0
    method: list[str] = field(default_factory=list)
    contact_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    b_check: np.ndarray | None = None
    degenerate_times: list[float] = field(default_factory=list)
    trace: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def b_left_limit(self) -> float:
        """Boundary at the last time node before the horizon."""
        return float(self.b[-1])

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values including the terminal point, for interpolation."""
        return np.append(self.t_grid, self.horizon), np.append(self.b, self.b_terminal)

    def at(self, t):
        tk, bk = self.knots()
        return np.interp(t, tk, bk)

    def gain_root(self) -> np.ndarray:
        return self.c0 / (self.c0 + self.c1)

    def perturbed(self, delta: float, floor_at_root: bool = True, ceiling: float = 1.0 - 1e-9) -> "Boundary":
        lo = self.gain_root() if floor_at_root else np.full_like(self.b, 1e-9)
        nb = np.clip(self.b + delta, lo, ceiling)
        return Boundary(self.t_grid, nb, self.c0, self.c1, self.horizon, self.b_terminal, self.dpi,
                        ["perturbed"] * nb.size, self.contact_index.copy())


def terminal_limit(pair: DiscountPair, T: float) -> float:
    """``c0(T) / (c0(T) + c1(T))``."""
    c0, c1 = pair.c0.value(T), pair.c1.value(T)
    if c0 + c1 <= 0:
        raise DegenerateError("c0(T) + c1(T) = 0")
    return c0 / (c0 + c1)


def _top_block_start(mask_row: np.ndarray) -> int:
    # Smallest index j >= 1 with mask_row[j:] all true; len(mask_row) if none.
    inner = mask_row[1:]
    bad = np.flatnonzero(~inner)
    return 1 if bad.size == 0 else int(bad[-1]) + 2


def extract_boundary(surface: ValueSurface, pair: DiscountPair) -> Boundary:
    """First contact belief per time node, refined below the grid spacing.

    The contact set is taken as the upper block of stopping nodes. Below the
    boundary ``V - G`` vanishes quadratically, so the boundary is placed at the
    root of the line through ``sqrt(V - G)`` at the two continuation nodes
    nearest to contact.
    """
    t_all = surface.t_grid
    nt = t_all.size - 1
    pi = surface.pi_grid
    dpi = surface.dpi
    M = pi.size - 1
    t = t_all[:nt]
    c0 = np.asarray(pair.c0.value(t), dtype=float)
    c1 = np.asarray(pair.c1.value(t), dtype=float)
    b = np.empty(nt)
    idx = np.empty(nt, dtype=int)
    methods: list[str] = []
    degenerate: list[float] = []
    gap = surface.v - surface.g
    for n in range(nt):
        j = _top_block_start(surface.stop_mask[n])
        idx[n] = j
        if j <= 1:
            b[n] = c0[n] / (c0[n] + c1[n])
            methods.append("degenerate")
            degenerate.append(float(t[n]))
            continue
        if j > M:
            b[n] = 1.0
            methods.append("grid")
            continue
        d1 = gap[n, j - 1]
        d2 = gap[n, j - 2] if j >= 3 else -1.0
        if d2 > d1 > 0:
            s1, s2 = math.sqrt(d1), math.sqrt(d2)
            frac = min(s1 / (s2 - s1), 1.0)
            b[n] = pi[j - 1] + frac * dpi
            methods.append("interpolated")
        else:
            b[n] = pi[j]
            methods.append("grid")
    T = float(t_all[-1])
    return Boundary(t, b, c0, c1, T, terminal_limit(pair, T), dpi, methods, idx, None, degenerate)


def transform_boundary(boundary: Boundary, pair: DiscountPair | None = None) -> Boundary:
    """Populate ``b_check = log(c1 b / ((1 - b) c0))``."""
    b = boundary.b
    if np.any(b <= 0) or np.any(b >= 1):
        raise DomainError("transformed boundary needs every b(t) strictly inside (0, 1)")
    boundary.b_check = np.log(boundary.c1 * b / ((1.0 - b) * boundary.c0))
    return boundary


def inverse_transform(b_check, c0, c1):
    """Recover ``b`` from its log-price form."""
    z = np.exp(b_check) * c0 / c1
    return z / (1.0 + z)


@dataclass
class MonotonicityReport:
    active: bool
    passed: bool
    max_violation: float
    n_violations: int
    worst_t: float | None
    slack: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_monotone_transformed(
    boundary: Boundary, report: ValidationReport, slack_factor: float = 2.0, t_max: float | None = None
) -> MonotonicityReport:
    """Measure increases of ``b_check`` beyond the grid-induced slack.

    The slack at a node is ``slack_factor * dpi / (b (1 - b))``, the change in
    ``b_check`` caused by moving ``b`` by ``slack_factor`` grid cells. The
    verdict is asserted only when B1-B3 hold.
    """
    if boundary.b_check is None:
        raise ParameterError("apply transform_boundary first")
    bc = boundary.b_check
    b = boundary.b
    t = boundary.t_grid
    if t_max is not None:
        keep = t <= t_max
        bc, b, t = bc[keep], b[keep], t[keep]
    local = slack_factor * boundary.dpi / (b * (1.0 - b))
    slack = np.maximum(local[1:], local[:-1])
    inc = np.diff(bc) - slack
    bad = inc > 0
    worst = int(np.argmax(inc)) if inc.size else 0
    active = report.boundary_ok
    return MonotonicityReport(
        active=active,
        passed=(not bad.any()) if active else True,
        max_violation=float(max(inc.max(), 0.0)) if inc.size else 0.0,
        n_violations=int(bad.sum()),
        worst_t=float(t[worst + 1]) if bad.any() else None,
        slack=float(slack.max()) if slack.size else 0.0,
    )


# -- integral equation ----------------------------------------------------


def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _branch_above(a: float, b: float, start: float, u, level):
    # P(Pi(u) >= level | theta) for theta = 1, 0 from Pi(0) = start. Levels at
    # 0 or 1 give probabilities 1 and 0 through the infinite logit.
    with np.errstate(divide="ignore"):
        xb = (logit(level) - logit(start) + 0.5 * a * (a + 2.0 * b) * u) / a
    su = np.sqrt(u)
    q1 = ndtr(-(xb - (a + b) * u) / su)
    q0 = ndtr(-(xb - b * u) / su)
    return q1, q0


@dataclass
class _IETerms:
    lhs: float
    rhs: float
    numer: float
    denom: float


def _terms_at(spec: ProblemSpec, tk: np.ndarray, bk: np.ndarray, i: int, start: float, nodes, weights) -> _IETerms:
    pair = spec.discounts
    a, bb = spec.a, spec.b
    T = tk[-1]
    t = tk[i]
    c0t, c1t = pair.c0.value(t), pair.c1.value(t)
    c0T, c1T = pair.c0.value(T), pair.c1.value(T)
    tau = T - t
    root_T = c0T / (c0T + c1T) if c0T + c1T > 0 else 0.5
    Q1T, Q0T = _branch_above(a, bb, start, tau, root_T)
    e_gain = start * c1T * Q1T - (1.0 - start) * c0T * Q0T

    lo = tk[i:-1]
    hi = tk[i + 1 :]
    h = (hi - lo)[:, None]
    s = lo[:, None] + h * nodes[None, :]
    w = (h * weights[None, :]).ravel()
    s = s.ravel()
    u = s - t
    # Interpolated level on each panel: linear between its two knots.
    lev = np.interp(s, tk, bk)
    q1, q0 = _branch_above(a, bb, start, u, lev)
    d0 = np.asarray(pair.c0.derivative(s))
    d1 = np.asarray(pair.c1.derivative(s))
    mean_above = start * q1
    prob_above = mean_above + (1.0 - start) * q0
    integral = float(np.sum(w * ((d1 + d0) * mean_above - d0 * prob_above)))
    rhs = e_gain - integral
    lhs = start * (c1t + c0t) - c0t
    i0 = float(np.sum(w * d0 * q0))
    i1 = float(np.sum(w * d1 * q1))
    numer = c0t - c0T * Q0T + i0
    denom = (c0t + c1t) - c1T * Q1T - c0T * Q0T + i1 + i0
    return _IETerms(lhs, rhs, numer, denom)


def terminal_expectation(
    spec: ProblemSpec, start: float, tau: float, method: str = "closed", n_nodes: int = 64
) -> float:
    """``E[G(T, Pi(tau))]`` from ``Pi(0) = start``.

    ``closed`` uses the branch probabilities above the gain root;
    ``hermite`` integrates ``G(T, pi(x))`` against each Gaussian branch with
    ``n_nodes`` Gauss-Hermite points.
    """
    pair = spec.discounts
    T = spec.horizon
    c0T, c1T = pair.c0.value(T), pair.c1.value(T)
    if tau <= 0:
        return max(c1T * start - c0T * (1 - start), 0.0)
    if method == "closed":
        q1, q0 = _branch_above(spec.a, spec.b, start, tau, c0T / (c0T + c1T))
        return float(start * c1T * q1 - (1 - start) * c0T * q0)
    if method != "hermite":
        raise ParameterError(f"unknown method {method!r}")
    z, w = np.polynomial.hermite.hermgauss(n_nodes)
    w = w / math.sqrt(math.pi)
    total = 0.0
    for prob, mu in ((start, spec.a + spec.b), (1 - start, spec.b)):
        x = mu * tau + math.sqrt(2.0 * tau) * z
        lo = logit(start) + spec.a * x - 0.5 * spec.a * (spec.a + 2 * spec.b) * tau
        pi = 1.0 / (1.0 + np.exp(-lo))
        total += prob * float(np.sum(w * np.maximum(c1T * pi - c0T * (1 - pi), 0.0)))
    return total


def integral_equation_residual(boundary: Boundary, spec: ProblemSpec, quad_n: int = 16, stride: int = 1) -> np.ndarray:
    """``|LHS - RHS|`` of the boundary integral equation at each boundary time.

    The time integral uses ``quad_n`` Gauss-Legendre nodes on every panel
    between consecutive boundary knots; the boundary is linear on each panel.
    ``stride > 1`` evaluates every ``stride``-th time only (others NaN).
    """
    if quad_n < 16:
        raise ParameterError("quad_n must be at least 16")
    tk, bk = boundary.knots()
    if abs(tk[-1] - spec.horizon) > 1e-12 * max(1.0, spec.horizon):
        raise DomainError("boundary does not reach the problem horizon")
    nodes, weights = _gauss_legendre(quad_n)
    out = np.full(boundary.t_grid.size, np.nan)
    for i in range(0, boundary.t_grid.size, stride):
        start = float(bk[i])
        if not (0 < start < 1):
            continue
        terms = _terms_at(spec, tk, bk, i, start, nodes, weights)
        out[i] = abs(terms.lhs - terms.rhs)
    return out


def solve_boundary_picard(
    spec: ProblemSpec,
    t_grid,
    max_iter: int = 200,
    tol: float = 1e-6,
    quad_n: int = 16,
    scheme: str = "ratio",
    ceiling_gap: float = 1e-6,
) -> Boundary:
    """Fixed-point iteration on the boundary integral equation.

    ``direct`` maps the right-hand side through the gain:
    ``b <- (RHS + c0) / (c0 + c1)``. ``ratio`` uses the algebraically
    equivalent form ``b <- N / D`` in which the start point enters only
    through branch probabilities; it contracts much faster. Iterates are
    clipped to ``[gain root, 1 - ceiling_gap]``. The result carries the
    sup-change trace and a ``converged`` flag; the best iterate is returned on
    failure.
    """
    if spec.infinite:
        raise ParameterError("Picard solver needs a finite horizon")
    if scheme not in ("direct", "ratio"):
        raise ParameterError(f"unknown scheme {scheme!r}")
    pair = spec.discounts
    T = spec.horizon
    t = np.asarray(t_grid, dtype=float)
    if t[0] < 0 or t[-1] >= T or np.any(np.diff(t) <= 0):
        raise ParameterError("t_grid must be increasing inside [0, T)")
    c0 = np.asarray(pair.c0.value(t), dtype=float)
    c1 = np.asarray(pair.c1.value(t), dtype=float)
    root = c0 / (c0 + c1)
    b_T = terminal_limit(pair, T)
    tk = np.append(t, T)
    nodes, weights = _gauss_legendre(quad_n)
    b = np.full(t.size, b_T)
    b = np.clip(b, root, 1 - ceiling_gap)
    trace: list[float] = []
    best, best_change = b.copy(), math.inf
    converged = False
    for _ in range(max_iter):
        bk = np.append(b, b_T)
        new = np.empty_like(b)
        for i in range(t.size):
            terms = _terms_at(spec, tk, bk, i, float(b[i]), nodes, weights)
            if scheme == "direct":
                new[i] = (terms.rhs + c0[i]) / (c0[i] + c1[i])
            else:
                new[i] = terms.numer / terms.denom
        new = np.clip(new, root, 1 - ceiling_gap)
        change = float(np.max(np.abs(new - b)))
        trace.append(change)
        b = new
        if change < best_change:
            best, best_change = b.copy(), change
        if change < tol:
            converged = True
            break
    out_b = b if converged else best
    return Boundary(t, out_b, c0, c1, T, b_T, 0.0, ["picard"] * t.size, trace=trace, converged=converged)


# -- shape description ------------------------------------------------------

SHAPES = ("rise_then_decline", "non_concave", "decreasing", "step_driven", "other")


@dataclass
class ShapeFeatures:
    t: np.ndarray
    b: np.ndarray
    slopes: np.ndarray
    curvature: np.ndarray
    peak_t: float
    max_jump: float
    jump_t: np.ndarray
    label: str

    def slope_signs(self, tol: float = 1e-3) -> str:
        return "".join("+" if s > tol else "-" if s < -tol else "0" for s in self.slopes)


def shape_features(
    t,
    b,
    horizon: float,
    samples: int = 20,
    slope_tol: float = 1e-3,
    concavity_tol: float = 1e-3,
    jump_tol: float = 0.15,
    steep_factor: float = 2.0,
) -> ShapeFeatures:
    """Coarse description of a boundary curve from ``samples`` uniform times in ``[0, T)``.

    Labels, checked in order: ``step_driven`` if two neighbouring samples
    differ by more than ``jump_tol``; ``decreasing`` if no sample-to-sample
    rise exceeds ``slope_tol``; ``non_concave`` if some second difference
    exceeds ``concavity_tol``; ``rise_then_decline`` if the curve rises to an
    interior peak and its last slope is at least ``steep_factor`` times
    steeper than its largest rise; ``other`` otherwise.
    """
    ts = np.linspace(0.0, horizon, samples + 1)[:-1]
    bs = np.interp(ts, np.asarray(t, dtype=float), np.asarray(b, dtype=float))
    d1 = np.diff(bs)
    d2 = np.diff(bs, 2)
    k = int(np.argmax(bs))
    jumps = np.flatnonzero(np.abs(d1) > jump_tol)
    if jumps.size:
        label = "step_driven"
    elif d1.max() <= slope_tol:
        label = "decreasing"
    elif d2.max() > concavity_tol:
        label = "non_concave"
    elif (
        0 < k < samples - 1
        and np.all(d1[:k] > -slope_tol)
        and np.all(d1[k:] < slope_tol)
        and -d1[-1] >= steep_factor * d1.max()
    ):
        label = "rise_then_decline"
    else:
        label = "other"
    return ShapeFeatures(
        ts, bs, d1, d2, float(ts[k]), float(np.abs(d1).max()), 0.5 * (ts[jumps] + ts[jumps + 1]), label
    )
