"""Problem instances, discount functions and assumption checks.

A problem is the pair of drift parameters ``(a, b)``, the prior ``p`` of the
favourable state, a horizon, and two discount functions ``c0`` (penalty weight
for accepting a bad reward) and ``c1`` (weight of a good reward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, ModelError, ParameterError

KINDS = ("exponential", "linear", "smoothed_step", "tabulated")

# Below this gap the smoothed step is returned as exactly zero; 1/(k*gap)
# would otherwise overflow the exponent.
_STEP_EPS = 1e-12


def smoothed_step(t, s: float, k: float):
    """C-infinity approximation of the indicator ``1{t > s}``.

    Returns ``exp(-1 / (k (t - s)))`` for ``t > s`` and 0 otherwise. Accepts
    scalars or arrays.
    """
    if k <= 0:
        raise ParameterError(f"sharpness must be positive, got {k}")
    t_arr = np.asarray(t, dtype=float)
    d = t_arr - s
    out = np.zeros_like(d)
    m = d > _STEP_EPS
    out[m] = np.exp(-1.0 / (k * d[m]))
    return float(out) if out.ndim == 0 else out


def smoothed_step_derivative(t, s: float, k: float):
    t_arr = np.asarray(t, dtype=float)
    d = t_arr - s
    out = np.zeros_like(d)
    m = d > _STEP_EPS
    dm = d[m]
    out[m] = np.exp(-1.0 / (k * dm)) / (k * dm * dm)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DiscountModel:
    """An evaluable discount function ``c(t)`` with its derivative.

    Use the classmethod constructors rather than filling fields by hand.
    ``limit`` declares ``c(inf)`` for kinds where it is not implied.
    """

    kind: str
    scale: float = 1.0
    rate: float = 0.0
    intercept: float = 1.0
    slope: float = 0.0
    steps: tuple[tuple[float, float], ...] = ()
    sharpness: float = 1.0
    knots: tuple[tuple[float, float, float], ...] = ()
    limit: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown discount kind {self.kind!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError(f"scale must be a positive finite number, got {self.scale}")
        if self.kind == "smoothed_step" and self.sharpness <= 0:
            raise ParameterError("smoothed-step sharpness must be positive")
        if self.kind == "tabulated":
            if len(self.knots) < 2:
                raise ParameterError("tabulated model needs at least two knots")
            ts = [k[0] for k in self.knots]
            if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
                raise ParameterError("tabulated knots must be strictly increasing in t")

    # -- constructors -----------------------------------------------------
    @classmethod
    def exponential(cls, rate: float, scale: float = 1.0) -> "DiscountModel":
        return cls(kind="exponential", rate=float(rate), scale=float(scale))

    @classmethod
    def linear(cls, intercept: float, slope: float, scale: float = 1.0, limit: float | None = None) -> "DiscountModel":
        return cls(kind="linear", intercept=float(intercept), slope=float(slope), scale=float(scale), limit=limit)

    @classmethod
    def smoothed_steps(
        cls,
        steps: Iterable[tuple[float, float]],
        sharpness: float,
        intercept: float = 1.0,
        slope: float = 0.0,
        scale: float = 1.0,
        limit: float | None = None,
    ) -> "DiscountModel":
        """``intercept + sum(w * f_k(t, s) for w, s in steps) + slope * t``."""
        return cls(
            kind="smoothed_step",
            steps=tuple((float(w), float(s)) for w, s in steps),
            sharpness=float(sharpness),
            intercept=float(intercept),
            slope=float(slope),
            scale=float(scale),
            limit=limit,
        )

    @classmethod
    def tabulated(
        cls, knots: Iterable[Sequence[float]], scale: float = 1.0, limit: float | None = None
    ) -> "DiscountModel":
        rows = tuple(tuple(float(v) for v in k) for k in knots)
        return cls(kind="tabulated", knots=rows, scale=float(scale), limit=limit)

    def scaled(self, factor: float) -> "DiscountModel":
        return replace(self, scale=self.scale * factor, limit=None if self.limit is None else self.limit * factor)

    # -- evaluation -------------------------------------------------------
    @cached_property
    def _spline(self):
        from scipy.interpolate import CubicHermiteSpline

        arr = np.array(self.knots, dtype=float)
        return CubicHermiteSpline(arr[:, 0], arr[:, 1], arr[:, 2], extrapolate=False)

    def _check_knots(self, t: np.ndarray) -> None:
        lo, hi = self.knots[0][0], self.knots[-1][0]
        if np.any(t < lo) or np.any(t > hi):
            raise ModelError(f"tabulated knots cover [{lo}, {hi}] only")

    def value(self, t):
        """Vectorised ``c(t)``; no horizon check."""
        t_arr = np.asarray(t, dtype=float)
        k = self.kind
        if k == "exponential":
            out = np.exp(-self.rate * t_arr)
        elif k == "linear":
            out = self.intercept + self.slope * t_arr
        elif k == "smoothed_step":
            out = self.intercept + self.slope * t_arr
            for w, s in self.steps:
                out = out + w * smoothed_step(t_arr, s, self.sharpness)
        else:
            self._check_knots(t_arr)
            out = self._spline(t_arr)
        out = self.scale * np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t_arr = np.asarray(t, dtype=float)
        k = self.kind
        if k == "exponential":
            out = -self.rate * np.exp(-self.rate * t_arr)
        elif k == "linear":
            out = np.full_like(t_arr, self.slope)
        elif k == "smoothed_step":
            out = np.full_like(t_arr, self.slope)
            for w, s in self.steps:
                out = out + w * smoothed_step_derivative(t_arr, s, self.sharpness)
        else:
            self._check_knots(t_arr)
            out = self._spline.derivative()(t_arr)
        out = self.scale * np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def positive(self, t):
        """``c(t) > 0``, decided analytically where the value may underflow."""
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            return np.isfinite(t_arr)
        return np.asarray(self.value(t_arr)) > 0

    def log_derivative(self, t):
        """``c'(t) / c(t)``; exact for the exponential kind."""
        if self.kind == "exponential":
            t_arr = np.asarray(t, dtype=float)
            out = np.full_like(t_arr, -self.rate)
            return float(out) if out.ndim == 0 else out
        out = np.asarray(self.derivative(t)) / np.asarray(self.value(t))
        return float(out) if out.ndim == 0 else out

    def at_infinity(self) -> float:
        """Declared or implied ``lim c(t)`` as ``t -> inf``."""
        if self.kind == "exponential":
            if self.rate > 0:
                return 0.0
            if self.rate == 0:
                return self.scale
        if self.kind == "linear" and self.slope == 0.0:
            return self.scale * self.intercept
        if self.limit is None:
            raise ModelError(f"{self.kind} discount has no declared value at infinity")
        return float(self.limit)

    def describe(self) -> dict:
        d: dict = {"kind": self.kind, "scale": self.scale}
        if self.kind == "exponential":
            d["rate"] = self.rate
        elif self.kind == "linear":
            d.update(intercept=self.intercept, slope=self.slope)
        elif self.kind == "smoothed_step":
            steps = [list(s) for s in self.steps]
            d.update(intercept=self.intercept, slope=self.slope, sharpness=self.sharpness, steps=steps)
        else:
            d["knots"] = [list(k) for k in self.knots]
        if self.limit is not None:
            d["limit"] = self.limit
        return d


def _check_time(t: float, horizon: float, closed: bool) -> None:
    if not (t >= 0):
        raise DomainError(f"time must be non-negative, got {t}")
    if closed and t > horizon:
        raise DomainError(f"time {t} beyond horizon {horizon}")
    if not closed and t >= horizon:
        raise DomainError(f"time {t} outside [0, {horizon})")


def eval_c(model: DiscountModel, t: float, horizon: float = math.inf) -> float:
    _check_time(t, horizon, closed=True)
    return model.value(t)


def eval_c_prime(model: DiscountModel, t: float, horizon: float = math.inf) -> float:
    _check_time(t, horizon, closed=False)
    return model.derivative(t)


def beta(model: DiscountModel, t: float) -> float:
    """Log-derivative ``c'(t)/c(t)``."""
    c = model.value(t)
    if c == 0:
        raise DomainError(f"c({t}) = 0, log-derivative undefined")
    return model.log_derivative(t)


@dataclass(frozen=True)
class DiscountPair:
    c0: DiscountModel
    c1: DiscountModel
    assumption_mode: str = "strict"
    survival0: DiscountModel | None = None
    survival1: DiscountModel | None = None
    deadline_interpretable: bool = False

    def __post_init__(self):
        if self.assumption_mode not in ("strict", "relaxed"):
            raise ParameterError(f"assumption_mode must be 'strict' or 'relaxed', got {self.assumption_mode!r}")

    def gain_root(self, t):
        """Belief at which the linear gain ``c1*pi - c0*(1-pi)`` vanishes."""
        c0 = self.c0.value(t)
        c1 = self.c1.value(t)
        return c0 / (c0 + c1)


def _is_survival(model: DiscountModel, horizon: float | None) -> bool:
    try:
        if abs(model.value(0.0) - 1.0) > 1e-12:
            return False
        if horizon is None or not math.isfinite(horizon):
            return True
        t = np.linspace(0.0, horizon, 1001)
        v = model.value(t)
    except ModelError:
        return False
    return bool(np.all(v >= -1e-14) and np.all(v <= 1 + 1e-12) and np.all(np.diff(v) <= 1e-14))


def embed_original(
    a: float,
    b: float,
    survival0: DiscountModel,
    survival1: DiscountModel,
    assumption_mode: str = "strict",
    horizon: float | None = None,
) -> DiscountPair:
    """Discounts of the deadline problem: ``c0 = -b*c(0,.)``, ``c1 = (a+b)*c(1,.)``.

    The pair is flagged deadline-interpretable when both inputs look like
    survival functions (value 1 at 0, non-increasing, within [0, 1]).
    """
    if a + b < 0 or b > 0:
        raise ParameterError(f"need a + b >= 0 >= b, got a={a}, b={b}")
    if a + b == 0 or b == 0:
        raise DegenerateError("a + b = 0 or b = 0: the reward sign is known, stopping at once is optimal")
    interp = _is_survival(survival0, horizon) and _is_survival(survival1, horizon)
    return DiscountPair(
        c0=survival0.scaled(-b),
        c1=survival1.scaled(a + b),
        assumption_mode=assumption_mode,
        survival0=survival0,
        survival1=survival1,
        deadline_interpretable=interp,
    )


@dataclass(frozen=True)
class ProblemSpec:
    a: float
    b: float
    p: float
    horizon: float
    discounts: DiscountPair

    def __post_init__(self):
        if not (self.a + self.b >= 0 >= self.b):
            raise ParameterError(f"need a + b >= 0 >= b, got a={self.a}, b={self.b}")
        if not (self.a > 0):
            raise ParameterError("signal gap a must be positive")
        if not (0 < self.p < 1):
            raise ParameterError(f"prior p must lie in (0, 1), got {self.p}")
        if not (self.horizon > 0):
            raise ParameterError(f"horizon must be positive, got {self.horizon}")

    @property
    def infinite(self) -> bool:
        return math.isinf(self.horizon)

    @property
    def c0(self) -> DiscountModel:
        return self.discounts.c0

    @property
    def c1(self) -> DiscountModel:
        return self.discounts.c1

    def with_horizon(self, horizon: float) -> "ProblemSpec":
        return replace(self, horizon=horizon)


# -- assumption checks ----------------------------------------------------


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    grid_n: int
    horizon: float
    mode: str
    checks: list[AssumptionCheck] = field(default_factory=list)

    def get(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def passed(self, name: str) -> bool:
        return self.get(name).passed

    def _all(self, names) -> bool:
        return all(self.passed(n) for n in names if any(c.name == n for c in self.checks))

    @property
    def strict_ok(self) -> bool:
        return self._all(["A1", "A2", "A3", "A4", "A5", "A5@inf"])

    @property
    def relaxed_ok(self) -> bool:
        return self._all(["A1", "A2", "A3-relaxed", "A4", "A5", "A5@inf"])

    @property
    def boundary_ok(self) -> bool:
        """B1-B3: transformed boundary monotone and boundary continuous."""
        return self._all(["B1", "B2", "B3"])

    @property
    def ok(self) -> bool:
        return self.strict_ok if self.mode == "strict" else (self.strict_ok or self.relaxed_ok)

    def table(self) -> str:
        lines = [f"grid_n={self.grid_n} horizon={self.horizon} mode={self.mode}"]
        for c in self.checks:
            w = "" if c.witness is None else f" at t={c.witness:.6g}"
            lines.append(f"  {c.name:<11} {'pass' if c.passed else 'FAIL'}{w} {c.detail}".rstrip())
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "grid_n": self.grid_n,
            "horizon": self.horizon if math.isfinite(self.horizon) else "inf",
            "mode": self.mode,
            "strict_ok": self.strict_ok,
            "relaxed_ok": self.relaxed_ok,
            "boundary_ok": self.boundary_ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "witness": c.witness, "detail": c.detail} for c in self.checks
            ],
        }


def _first_fail(mask: np.ndarray, t: np.ndarray) -> float | None:
    bad = np.flatnonzero(~mask)
    return None if bad.size == 0 else float(t[bad[0]])


def _validation_grid(horizon: float, grid_n: int) -> np.ndarray:
    if math.isfinite(horizon):
        return np.linspace(0.0, horizon, grid_n)
    # Compactified grid t = s / (1 - s) covering [0, ~grid_n).
    s = np.linspace(0.0, 1.0, grid_n + 1)[:-1]
    return s / (1.0 - s)


def validate_assumptions(pair: DiscountPair, spec_horizon: float, grid_n: int = 10_001) -> ValidationReport:
    """Grid check of A1-A5, the relaxed monotonicity variant, and B1-B3.

    Failures are recorded in the report with the first witnessing time; no
    exception is raised.
    """
    if grid_n < 2:
        raise ParameterError("grid_n must be at least 2")
    rep = ValidationReport(grid_n=grid_n, horizon=spec_horizon, mode=pair.assumption_mode)
    t = _validation_grid(spec_horizon, grid_n)
    finite = math.isfinite(spec_horizon)
    open_t = t[:-1] if finite else t
    add = rep.checks.append

    try:
        v0, v1 = pair.c0.value(t), pair.c1.value(t)
        d0, d1 = pair.c0.derivative(t), pair.c1.derivative(t)
    except ModelError as exc:
        for name in ("A1", "A2", "A3", "A3-relaxed", "A4", "A5", "B1", "B2", "B3"):
            add(AssumptionCheck(name, False, None, str(exc)))
        return rep

    n_open = open_t.size
    pos = pair.c0.positive(open_t) & pair.c1.positive(open_t)
    add(AssumptionCheck("A1", bool(pos.all()), _first_fail(pos, open_t), "c0, c1 > 0 on [0,T)"))

    fin = np.isfinite(v0) & np.isfinite(v1) & np.isfinite(d0) & np.isfinite(d1)
    dt = np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    cont = np.ones(dt.size, dtype=bool)
    for model, v, d in ((pair.c0, v0, d0), (pair.c1, v1, d1)):
        dm = np.abs(model.derivative(mid))
        bound = 1.5 * dt * np.maximum(np.maximum(np.abs(d[1:]), np.abs(d[:-1])), dm) + 1e-12 * (1 + np.abs(v[1:]))
        cont &= np.abs(np.diff(v)) <= bound
    ok2 = bool(fin.all() and cont.all())
    w2 = _first_fail(fin, t) if not fin.all() else _first_fail(cont, t[:-1])
    add(AssumptionCheck("A2", ok2, w2, "finite values/derivatives, no jumps at grid resolution"))

    tol0 = 1e-12 * max(1.0, float(np.max(np.abs(v0))))
    tol1 = 1e-12 * max(1.0, float(np.max(np.abs(v1))))
    non_inc0 = d0 <= tol0
    non_inc1 = d1 <= tol1
    both = non_inc0 & non_inc1
    add(AssumptionCheck("A3", bool(both.all()), _first_fail(both, t), "c0, c1 non-increasing"))
    sum_ok = (d0 + d1) <= tol0 + tol1
    relaxed = bool(sum_ok.all()) and (bool(non_inc0.all()) or bool(non_inc1.all()))
    w3 = _first_fail(sum_ok, t) if not sum_ok.all() else (None if relaxed else float(t[0]))
    add(AssumptionCheck("A3-relaxed", relaxed, w3, "c0+c1 and one of c0, c1 non-increasing"))

    dmax = float(np.max(np.abs(np.concatenate([d0[:n_open], d1[:n_open]]))))
    add(AssumptionCheck("A4", math.isfinite(dmax), None, f"max |c'| = {dmax:.6g}"))

    with np.errstate(divide="ignore", invalid="ignore"):
        b0 = np.asarray(pair.c0.log_derivative(open_t), dtype=float)
        b1 = np.asarray(pair.c1.log_derivative(open_t), dtype=float)
    gap = b0 - b1
    a5 = np.isfinite(gap) & (gap > 0)
    add(AssumptionCheck("A5", bool(a5.all()), _first_fail(a5, open_t), f"min(beta0 - beta1) = {np.nanmin(gap):.6g}"))

    if not finite:
        try:
            l0, l1 = pair.c0.at_infinity(), pair.c1.at_infinity()
        except ModelError as exc:
            add(AssumptionCheck("A5@inf", False, None, str(exc)))
        else:
            ok_inf = True
            if l0 > 0 and l1 > 0:
                ok_inf = bool(gap[-1] > 1e-9)
            add(AssumptionCheck("A5@inf", ok_inf, None if ok_inf else math.inf, f"c0(inf)={l0:.6g}, c1(inf)={l1:.6g}"))

    # B1-B3 (finite horizon only; they concern the transformed boundary).
    btol = 1e-10
    inc0 = np.diff(b0) <= btol * (1 + np.abs(b0[1:]))
    g = b1 - b0
    inc1 = np.diff(g) <= btol * (1 + np.abs(g[1:]))
    b1_ok = bool(inc0.all() and inc1.all())
    wb1 = _first_fail(inc0, open_t[1:]) if not inc0.all() else _first_fail(inc1, open_t[1:])
    add(AssumptionCheck("B1", b1_ok, wb1, "beta0 and beta1 - beta0 non-increasing"))
    neg = b0 < 0
    add(AssumptionCheck("B2", bool(neg.all()), _first_fail(neg, open_t), "beta0 < 0"))
    if finite:
        ok3 = bool(v0[-1] > 0 and v1[-1] > 0)
        add(AssumptionCheck("B3", ok3, None if ok3 else float(t[-1]), f"c0(T)={v0[-1]:.6g}, c1(T)={v1[-1]:.6g}"))
    else:
        add(AssumptionCheck("B3", False, None, "infinite horizon"))
    return rep
