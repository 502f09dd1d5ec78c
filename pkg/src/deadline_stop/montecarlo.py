"""Monte Carlo replay of the stopping problem under a boundary policy.

Paths are drawn in fixed-size shards, each from its own child seed of
``SeedSequence(seed)``, so results do not depend on the worker count and two
policies evaluated with the same seed see the same randomness.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from . import kernels
from ._jit import max_workers
from .boundary import Boundary
from .errors import ConfigurationError
from .model import ProblemSpec
from .posterior import NEVER, draw_shard, sample_deadline, shard_sizes, substream_seeds, time_grid


@dataclass(frozen=True)
class PolicyStats:
    mean_payoff: float
    std_error: float
    n: int
    stop_time_quantiles: tuple[float, float, float]
    fraction_stopped_before_deadline: float
    fraction_decide_one: float
    # Per-branch means of the payoff, (theta = 0, theta = 1), and their counts.
    mean_by_theta: tuple[float, float] = (math.nan, math.nan)
    n_by_theta: tuple[int, int] = (0, 0)
    payoffs: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "mean_payoff": self.mean_payoff,
            "std_error": self.std_error,
            "n": self.n,
            "stop_time_quantiles": list(self.stop_time_quantiles),
            "fraction_stopped_before_deadline": self.fraction_stopped_before_deadline,
            "fraction_decide_one": self.fraction_decide_one,
            "mean_by_theta": list(self.mean_by_theta),
            "n_by_theta": list(self.n_by_theta),
        }


@dataclass
class _Replay:
    theta: np.ndarray
    tau: np.ndarray
    deadline: np.ndarray
    decide_one: np.ndarray
    payoff_original: np.ndarray | None
    payoff_pi: np.ndarray


def _level_logits(boundary: Boundary, spec: ProblemSpec, times: np.ndarray) -> np.ndarray:
    if abs(boundary.horizon - spec.horizon) > 1e-9 * max(1.0, spec.horizon):
        raise ConfigurationError(f"boundary horizon {boundary.horizon} does not match problem horizon {spec.horizon}")
    lev = np.clip(boundary.at(times[:-1]), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return logit(lev)


def _shard(spec: ProblemSpec, times, level_logit, seed_seq, n: int, deadlines: bool) -> _Replay:
    m = times.size - 1
    dt = float(times[1] - times[0])
    theta, u, z = draw_shard(seed_seq, n, m, spec.p)
    hit = np.empty(n, dtype=np.int64)
    x_hit = np.empty(n)
    kernels.first_passage(theta, z, dt, spec.a, spec.b, float(logit(spec.p)), level_logit, hit, x_hit)
    tau = times[hit]
    pair = spec.discounts
    pi = expit(logit(spec.p) + spec.a * x_hit - 0.5 * spec.a * (spec.a + 2.0 * spec.b) * tau)
    c0 = np.asarray(pair.c0.value(tau), dtype=float)
    c1 = np.asarray(pair.c1.value(tau), dtype=float)
    lin = c1 * pi - c0 * (1.0 - pi)
    d = lin >= 0.0
    gamma = np.full(n, NEVER)
    payoff_original = None
    if deadlines:
        for branch, surv in ((0, pair.survival0), (1, pair.survival1)):
            sel = theta == branch
            if sel.any():
                gamma[sel] = sample_deadline(surv, u[sel], spec.horizon)
        payoff_original = (spec.a * theta + spec.b) * (d & (tau < gamma))
    return _Replay(theta, tau, gamma, d, payoff_original, np.where(d, lin, 0.0))


def _replay(spec: ProblemSpec, boundary: Boundary, n: int, dt: float, seed: int, deadlines: bool) -> _Replay:
    if n < 2:
        raise ConfigurationError("need at least 2 paths")
    if spec.infinite:
        raise ConfigurationError("Monte Carlo replay needs a finite horizon")
    times = time_grid(spec.horizon, dt)
    level = _level_logits(boundary, spec, times)
    sizes = shard_sizes(n)
    seeds = substream_seeds(seed, len(sizes))
    jobs = list(zip(seeds, sizes))
    workers = min(max_workers(), len(jobs))
    run = lambda job: _shard(spec, times, level, job[0], job[1], deadlines)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    def cat(name):
        arrs = [getattr(p, name) for p in parts]
        return None if arrs[0] is None else np.concatenate(arrs)

    return _Replay(*(cat(k) for k in ("theta", "tau", "deadline", "decide_one", "payoff_original", "payoff_pi")))


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.size


def _stats(payoff: np.ndarray, rep: _Replay, deadlines: bool) -> PolicyStats:
    n = payoff.size
    mean = _mean(payoff)
    sd = math.sqrt(math.fsum(((payoff - mean) ** 2).tolist()) / (n - 1))
    q = np.quantile(rep.tau, [0.1, 0.5, 0.9])
    by = []
    counts = []
    for branch in (0, 1):
        sel = rep.theta == branch
        counts.append(int(sel.sum()))
        by.append(_mean(payoff[sel]) if sel.any() else math.nan)
    before = float(np.mean(rep.tau < rep.deadline)) if deadlines else math.nan
    return PolicyStats(
        mean_payoff=mean,
        std_error=sd / math.sqrt(n),
        n=n,
        stop_time_quantiles=(float(q[0]), float(q[1]), float(q[2])),
        fraction_stopped_before_deadline=before,
        fraction_decide_one=float(np.mean(rep.decide_one)),
        mean_by_theta=(by[0], by[1]),
        n_by_theta=(counts[0], counts[1]),
        payoffs=payoff,
    )


def evaluate_policy(spec: ProblemSpec, boundary: Boundary, n: int, dt: float, seed: int) -> PolicyStats:
    """Average realised reward ``(a theta + b) 1{d = 1} 1{tau < gamma}``.

    ``tau`` is the first simulation time with ``Pi >= b`` (``b`` linearly
    interpolated between its nodes), or ``T``; ``d = 1`` iff the gain's linear
    part is non-negative at ``tau``. Needs a pair with a deadline reading.
    """
    if not spec.discounts.deadline_interpretable:
        raise ConfigurationError("discount pair has no deadline interpretation; use evaluate_pi_formulation")
    rep = _replay(spec, boundary, n, dt, seed, deadlines=True)
    return _stats(rep.payoff_original, rep, True)


def evaluate_pi_formulation(spec: ProblemSpec, boundary: Boundary, n: int, dt: float, seed: int) -> PolicyStats:
    """Average ``G(tau, Pi(tau))`` over the same paths as :func:`evaluate_policy`."""
    deadlines = spec.discounts.deadline_interpretable
    rep = _replay(spec, boundary, n, dt, seed, deadlines=deadlines)
    return _stats(rep.payoff_pi, rep, deadlines)


def compare_formulations(spec: ProblemSpec, boundary: Boundary, n: int, dt: float, seed: int):
    """Both formulations from one set of paths, plus their paired difference.

    Returns ``(policy_stats, pi_stats, mean_difference, paired_se)``.
    """
    if not spec.discounts.deadline_interpretable:
        raise ConfigurationError("discount pair has no deadline interpretation")
    rep = _replay(spec, boundary, n, dt, seed, deadlines=True)
    a = _stats(rep.payoff_original, rep, True)
    b = _stats(rep.payoff_pi, rep, True)
    diff, se = paired_difference(a, b)
    return a, b, diff, se


def paired_difference(first: PolicyStats, second: PolicyStats) -> tuple[float, float]:
    """Mean and standard error of ``first - second`` path by path."""
    if first.payoffs is None or second.payoffs is None or first.payoffs.size != second.payoffs.size:
        raise ConfigurationError("paired comparison needs payoffs from the same paths")
    d = first.payoffs - second.payoffs
    m = _mean(d)
    sd = math.sqrt(math.fsum(((d - m) ** 2).tolist()) / (d.size - 1))
    return m, sd / math.sqrt(d.size)


def suboptimality_probe(
    spec: ProblemSpec,
    boundary: Boundary,
    perturbation: float,
    n: int,
    seed: int,
    dt: float = 5e-4,
) -> tuple[PolicyStats, PolicyStats]:
    """Evaluate ``boundary`` and ``boundary + perturbation`` on common random numbers.

    The shifted boundary is clipped to ``[gain root, 1)``. The original
    reward is used when the pair has a deadline reading, ``G(tau, Pi)``
    otherwise.
    """
    evaluate = evaluate_policy if spec.discounts.deadline_interpretable else evaluate_pi_formulation
    base = evaluate(spec, boundary, n, dt, seed)
    if perturbation == 0:
        return base, base
    return base, evaluate(spec, boundary.perturbed(perturbation), n, dt, seed)
