from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from deadline_stop import catalog
from deadline_stop.errors import ConfigurationError, DomainError, ModelError
from deadline_stop.model import DiscountModel
from deadline_stop.posterior import (
    NEVER,
    branch_probabilities_above,
    norm_sf,
    paths_to_csv_rows,
    pi_from_x,
    sample_deadline,
    simulate_paths,
    threshold_in_x,
    transition_moments,
)

SPEC = catalog.example_problem("5.1")  # a = 2, b = -1


def _pi_direct(a, b, prior, t, x):
    e1 = math.exp((a + b) * x - (a + b) ** 2 * t / 2)
    e0 = math.exp(b * x - b * b * t / 2)
    return prior * e1 / (prior * e1 + (1 - prior) * e0)


def test_norm_sf_tail():
    assert norm_sf(0.0) == 0.5
    assert norm_sf(10.0) == pytest.approx(norm.sf(10.0), rel=1e-14)
    assert norm_sf(-40.0) == 1.0


def test_pi_from_x_matches_likelihood_ratio():
    for t, x, prior in ((0.3, 0.2, 0.4), (1.0, -0.7, 0.9), (2.5, 1.1, 0.05)):
        assert pi_from_x(SPEC, prior, t, x) == pytest.approx(_pi_direct(2.0, -1.0, prior, t, x), rel=1e-13)


def test_pi_from_x_special_cases():
    assert pi_from_x(SPEC, 0.37, 0.0, 5.0) == 0.37
    for t in (0.1, 1.0, 7.0):
        assert pi_from_x(SPEC, 0.5, t, 0.0) == pytest.approx(0.5, abs=1e-15)
    for prior in (0.0, 1.0):
        assert pi_from_x(SPEC, prior, 2.0, 3.0) == prior
    # no overflow for extreme observations
    assert pi_from_x(SPEC, 0.5, 1.0, 1e4) == 1.0
    assert pi_from_x(SPEC, 0.5, 1.0, -1e4) == 0.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 3), st.floats(0.01, 0.99))
def test_pi_from_x_increasing_in_x(x1, x2, t, prior):
    lo, hi = min(x1, x2), max(x1, x2)
    p_lo, p_hi = pi_from_x(SPEC, prior, t, lo), pi_from_x(SPEC, prior, t, hi)
    assert 0 <= p_lo <= p_hi <= 1
    if hi - lo > 1e-6:
        assert p_hi > p_lo or p_hi == 1.0 or p_lo == 0.0


def test_threshold_in_x():
    assert threshold_in_x(SPEC, 0.5, 1.0, 0.5) == 0.0
    assert abs(threshold_in_x(SPEC, 0.3, 1e-12, 0.3)) < 1e-10
    with pytest.raises(DomainError):
        threshold_in_x(SPEC, 0.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        threshold_in_x(SPEC, 0.0, 1.0, 0.5)


@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(0.01, 3.0))
def test_threshold_round_trip(prior, level, u):
    spec = catalog.example_problem("5.3")
    xb = threshold_in_x(spec, prior, u, level)
    assert pi_from_x(spec, prior, u, xb) == pytest.approx(level, abs=1e-12)


def test_transition_moment_limits():
    lo = transition_moments(SPEC, 0.4, 0.5, 1e-12)
    assert lo.prob_above == pytest.approx(1.0, abs=1e-9)
    assert lo.mean_above == pytest.approx(0.4, abs=1e-9)
    hi = transition_moments(SPEC, 0.4, 0.5, 1 - 1e-12)
    assert hi.prob_above < 1e-9 and hi.mean_above < 1e-9
    with pytest.raises(DomainError):
        transition_moments(SPEC, 0.4, 0.0, 0.5)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.01, 2.0))
@settings(max_examples=50)
def test_transition_moment_bounds(prior, level, u):
    m = transition_moments(SPEC, prior, u, level)
    assert 0 <= m.mean_above <= m.prob_above <= 1
    assert m.mean_above <= prior + 1e-15
    m2 = transition_moments(SPEC, prior, u, min(level + 0.01, 0.99))
    assert m2.prob_above <= m.prob_above + 1e-15


def test_transition_moments_against_quadrature():
    spec = catalog.example_problem("5.2")
    a, b = spec.a, spec.b
    for prior, u, level in ((0.5, 0.25, 0.6), (0.2, 1.0, 0.3), (0.8, 0.05, 0.9)):
        xb = threshold_in_x(spec, prior, u, level)
        dens = lambda x: prior * norm.pdf(x, (a + b) * u, math.sqrt(u)) + (1 - prior) * norm.pdf(x, b * u, math.sqrt(u))
        pi = lambda x: pi_from_x(spec, prior, u, x)
        below = integrate.quad(lambda x: pi(x) * dens(x), -np.inf, xb, epsabs=1e-13, epsrel=1e-12)[0]
        above = integrate.quad(lambda x: pi(x) * dens(x), xb, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
        p_above = integrate.quad(dens, xb, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
        m = transition_moments(spec, prior, u, level)
        assert m.mean_above == pytest.approx(above, abs=1e-8)
        assert m.prob_above == pytest.approx(p_above, abs=1e-8)
        assert prior - m.mean_above == pytest.approx(below, abs=1e-8)
        q1, q0 = branch_probabilities_above(spec, prior, u, level)
        assert m.prob_above == pytest.approx(prior * q1 + (1 - prior) * q0, abs=1e-12)


def test_transition_moments_against_monte_carlo():
    rng = np.random.default_rng(2024)
    n = 1_000_000
    prior, u, level = 0.5, 0.25, 0.6
    theta = rng.random(n) < prior
    x = (2.0 * theta - 1.0) * u + math.sqrt(u) * rng.standard_normal(n)
    pi = pi_from_x(SPEC, prior, u, x)
    above = pi >= level
    m = transition_moments(SPEC, prior, u, level)
    se_p = above.std() / math.sqrt(n)
    y = pi * above
    se_m = y.std() / math.sqrt(n)
    assert abs(above.mean() - m.prob_above) <= 3 * se_p
    assert abs(y.mean() - m.mean_above) <= 3 * se_m


def test_sample_deadline():
    s = DiscountModel.exponential(0.4)
    t0 = 0.37
    assert sample_deadline(s, math.exp(-0.4 * t0), 1.0) == pytest.approx(t0, abs=1e-9)
    assert sample_deadline(s, 1.0, 1.0) == 0.0
    assert sample_deadline(s, 0.5, 1.0) is NEVER or math.isinf(sample_deadline(s, 0.5, 1.0))
    u = np.array([0.9, 0.7, 0.6])
    out = sample_deadline(s, u, 1.0)
    # 0.6 < exp(-0.4): the deadline falls beyond the horizon
    assert np.allclose(out[:2], -np.log(u[:2]) / 0.4, atol=1e-9)
    assert math.isinf(out[2])
    with pytest.raises(ModelError):
        sample_deadline(DiscountModel.exponential(0.4, scale=0.5), 0.3, 1.0)


def test_forced_deterministic_path():
    paths = simulate_paths(SPEC, 1, 0.01, 0, theta=1, zero_noise=True)
    p = paths[0]
    assert p.theta == 1
    assert np.allclose(p.x, (SPEC.a + SPEC.b) * p.times)
    assert np.all(np.diff(p.pi) > 0)
    assert p.pi[0] == SPEC.p


def test_path_invariants_and_determinism():
    a = simulate_paths(SPEC, 300, 0.01, 42)
    b = simulate_paths(SPEC, 300, 0.01, 42)
    for pa, pb in zip(a, b):
        assert pa.theta == pb.theta and pa.deadline == pb.deadline
        assert np.array_equal(pa.x, pb.x) and np.array_equal(pa.pi, pb.pi)
        assert pa.pi[0] == SPEC.p
        assert np.all((pa.pi >= 0) & (pa.pi <= 1))
        assert pa.times[0] == 0 and np.all(np.diff(pa.times) > 0)
    c = simulate_paths(SPEC, 300, 0.01, 43)
    assert any(not np.array_equal(pa.x, pc.x) for pa, pc in zip(a, c))


def test_martingale():
    n = 100_000
    paths = simulate_paths(SPEC, n, 0.05, 5, sample_deadlines=False)
    pis = np.array([p.pi for p in paths])
    for k in (2, 5, 10, 20):
        col = pis[:, k]
        assert abs(col.mean() - SPEC.p) <= 3 * col.std() / math.sqrt(n)


def test_deadline_frequencies():
    n = 40_000
    paths = simulate_paths(SPEC, n, 0.05, 9)
    theta = np.array([p.theta for p in paths])
    dl = np.array([p.deadline for p in paths])
    for branch, rate in ((0, 0.4), (1, 1.0)):
        never = np.isinf(dl[theta == branch]).mean()
        m = (theta == branch).sum()
        expect = math.exp(-rate)
        assert abs(never - expect) <= 4 * math.sqrt(expect * (1 - expect) / m)


def test_simulation_requires_deadline_reading():
    spec = catalog.example_problem("5.4")
    with pytest.raises(ConfigurationError):
        simulate_paths(spec, 10, 0.01, 0)
    assert len(simulate_paths(spec, 10, 0.01, 0, sample_deadlines=False)) == 10
    with pytest.raises(ConfigurationError):
        simulate_paths(SPEC, 0, 0.01, 0)
    with pytest.raises(ConfigurationError):
        simulate_paths(SPEC, 5, 2.0, 0)


def test_csv_rows():
    paths = simulate_paths(SPEC, 2, 0.25, 1)
    rows = list(paths_to_csv_rows(paths))
    assert len(rows) == 10
    assert rows[0][0] == 0 and rows[-1][0] == 1
    assert rows[0][1] == 0.0 and rows[0][3] == SPEC.p
