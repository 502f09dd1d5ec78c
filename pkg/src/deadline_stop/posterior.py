"""Posterior probability of the favourable drift, computed exactly.

The posterior is a deterministic function of the running observation
``X(t) = (a*theta + b) t + W(t)``, so paths are simulated through ``X`` and
mapped in log-odds space; the posterior SDE is never discretised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, ndtr

from .errors import ConfigurationError, DomainError, ModelError
from .model import DiscountModel, ProblemSpec


def norm_sf(z):
    """Standard normal survival function via ``ndtr(-z)`` (erfc based)."""
    return ndtr(-np.asarray(z, dtype=float))


def _log_odds(spec_a: float, spec_b: float, prior, t, x):
    return logit(prior) + spec_a * x - 0.5 * spec_a * (spec_a + 2.0 * spec_b) * t


def pi_from_x(spec: ProblemSpec, prior, t, x):
    """Posterior ``P(theta = 1 | X(t) = x)`` started from ``prior``.

    Evaluated as a logistic of the log-likelihood ratio, which cannot
    overflow. ``prior`` in {0, 1} is returned unchanged.
    """
    prior_a = np.asarray(prior, dtype=float)
    t_a = np.asarray(t, dtype=float)
    x_a = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        lo = _log_odds(spec.a, spec.b, prior_a, t_a, x_a)
    out = np.where((prior_a <= 0) | (prior_a >= 1), prior_a, expit(lo))
    out = np.where(t_a == 0, prior_a, out)
    return float(out) if out.ndim == 0 else out


def threshold_in_x(spec: ProblemSpec, prior: float, u, level):
    """Observation level ``x_b`` at time ``u`` where the posterior equals ``level``."""
    prior = float(prior)
    lev = np.asarray(level, dtype=float)
    if not (0 < prior < 1):
        raise DomainError(f"prior must lie in (0, 1), got {prior}")
    if np.any(lev <= 0) or np.any(lev >= 1):
        raise DomainError("level must lie in (0, 1)")
    a, b = spec.a, spec.b
    out = (logit(lev) - logit(prior) + 0.5 * a * (a + 2.0 * b) * np.asarray(u, dtype=float)) / a
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TransitionMoments:
    prob_above: float
    mean_above: float


def branch_probabilities_above(spec: ProblemSpec, prior: float, u, level):
    """``(P(Pi(u) >= level | theta=1), P(Pi(u) >= level | theta=0))``."""
    u_a = np.asarray(u, dtype=float)
    if np.any(u_a <= 0):
        raise DomainError("u must be positive")
    xb = threshold_in_x(spec, prior, u_a, level)
    su = np.sqrt(u_a)
    q1 = norm_sf((xb - (spec.a + spec.b) * u_a) / su)
    q0 = norm_sf((xb - spec.b * u_a) / su)
    return q1, q0


def transition_moments(spec: ProblemSpec, prior: float, u, level) -> TransitionMoments:
    """``P(Pi(u) >= level)`` and ``E[Pi(u) 1{Pi(u) >= level}]`` from ``Pi(0) = prior``.

    Uses that under the prior the observation is a two-component Gaussian
    mixture and that ``E[Pi 1_A] = P(theta = 1, A)``. Vectorised over ``u`` and
    ``level``.
    """
    q1, q0 = branch_probabilities_above(spec, prior, u, level)
    prob = prior * q1 + (1.0 - prior) * q0
    mean = prior * q1
    if np.ndim(prob) == 0:
        return TransitionMoments(float(prob), float(mean))
    return TransitionMoments(prob, mean)


# -- path simulation --------------------------------------------------------

NEVER = math.inf
"""Deadline marker: the deadline does not occur within the horizon."""


@dataclass
class PathSample:
    theta: int
    deadline: float
    times: np.ndarray
    x: np.ndarray
    pi: np.ndarray


def sample_deadline(survival: DiscountModel, u, horizon: float, rtol: float = 1e-10):
    """Inverse-transform draw ``inf{t : survival(t) <= u}`` by bisection.

    Returns :data:`NEVER` where ``u < survival(horizon)`` (the atom of mass
    ``survival(T)`` beyond the horizon). Vectorised over ``u``.
    """
    if abs(survival.value(0.0) - 1.0) > 1e-12:
        raise ModelError(f"survival(0) must be 1, got {survival.value(0.0)}")
    if not math.isfinite(horizon):
        raise ConfigurationError("deadline sampling needs a finite horizon")
    u_a = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.full(u_a.shape, NEVER)
    s_end = survival.value(horizon)
    todo = u_a >= s_end
    if np.any(todo):
        uu = u_a[todo]
        lo = np.zeros_like(uu)
        hi = np.full_like(uu, horizon)
        tol = rtol * horizon
        n_iter = int(math.ceil(math.log2(max(horizon / tol, 2.0)))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = survival.value(mid) <= uu
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        res = hi
        res[uu >= 1.0] = 0.0
        out[todo] = res
    return float(out[0]) if np.ndim(u) == 0 else out


SHARD_SIZE = 4096
"""Paths per substream. Fixed so results do not depend on the worker count."""


def substream_seeds(seed: int, n_shards: int) -> list[np.random.SeedSequence]:
    """Independent child seeds, one per shard index."""
    return np.random.SeedSequence(seed).spawn(n_shards)


def shard_sizes(n: int) -> list[int]:
    sizes = [SHARD_SIZE] * (n // SHARD_SIZE)
    if n % SHARD_SIZE:
        sizes.append(n % SHARD_SIZE)
    return sizes


def draw_shard(seed_seq: np.random.SeedSequence, n: int, m: int, p: float):
    """Randomness for ``n`` paths of ``m`` steps: ``(theta, u, z)``.

    ``theta`` ~ Bernoulli(p), ``u`` uniform for the deadline draw, ``z``
    standard normal increments. The draw order is part of the contract:
    every consumer of a seed sees the same paths.
    """
    rng = np.random.default_rng(seed_seq)
    theta = (rng.random(n) < p).astype(np.int64)
    u = rng.random(n)
    z = rng.standard_normal((n, m))
    return theta, u, z


def time_grid(horizon: float, dt: float) -> np.ndarray:
    if not (0 < dt <= horizon):
        raise ConfigurationError(f"need 0 < dt <= T, got dt={dt}, T={horizon}")
    m = int(round(horizon / dt))
    if abs(m * dt - horizon) > 1e-9 * horizon:
        m = int(math.ceil(horizon / dt))
    return np.linspace(0.0, horizon, m + 1)


def simulate_paths(
    spec: ProblemSpec,
    n: int,
    dt: float,
    seed: int,
    *,
    sample_deadlines: bool = True,
    theta: int | None = None,
    zero_noise: bool = False,
) -> list[PathSample]:
    """Draw ``n`` independent paths of ``(theta, deadline, X, Pi)`` on a uniform grid.

    Paths come in shards of :data:`SHARD_SIZE`, each from its own child of
    ``SeedSequence(seed)``; :mod:`deadline_stop.montecarlo` uses the same
    layout, so a seed names the same paths in both places.

    ``theta`` and ``zero_noise`` override the random draws and exist for
    tests. Deadlines require a deadline-interpretable pair; pass
    ``sample_deadlines=False`` otherwise.
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    if spec.infinite:
        raise ConfigurationError("path simulation needs a finite horizon")
    pair = spec.discounts
    if sample_deadlines and not pair.deadline_interpretable:
        raise ConfigurationError("discount pair has no deadline interpretation; set sample_deadlines=False")
    times = time_grid(spec.horizon, dt)
    steps = np.diff(times)
    sizes = shard_sizes(n)
    parts = [draw_shard(ss, k, steps.size, spec.p) for ss, k in zip(substream_seeds(seed, len(sizes)), sizes)]
    th, u, z = (np.concatenate([part[i] for part in parts]) for i in range(3))
    if theta is not None:
        th = np.full(n, int(bool(theta)), dtype=np.int64)
    if zero_noise:
        z = np.zeros_like(z)
    drift = spec.a * th + spec.b
    x = np.zeros((n, times.size))
    np.cumsum(drift[:, None] * steps[None, :] + np.sqrt(steps)[None, :] * z, axis=1, out=x[:, 1:])
    pis = pi_from_x(spec, spec.p, times[None, :], x)
    deadlines = np.full(n, NEVER)
    if sample_deadlines:
        for branch, surv in ((0, pair.survival0), (1, pair.survival1)):
            m = th == branch
            if m.any():
                deadlines[m] = sample_deadline(surv, u[m], spec.horizon)
    return [PathSample(int(th[i]), float(deadlines[i]), times, x[i], pis[i]) for i in range(n)]


def paths_to_csv_rows(paths: list[PathSample]):
    """Long-format rows ``(sample_id, t, x, pi, theta, deadline_flag)``.

    ``deadline_flag`` is 1 once the deadline has passed at time ``t``.
    """
    for sid, p in enumerate(paths):
        for t, x, pi in zip(p.times, p.x, p.pi):
            yield sid, float(t), float(x), float(pi), p.theta, int(t >= p.deadline)
