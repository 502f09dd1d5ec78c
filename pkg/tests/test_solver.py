from __future__ import annotations

import math

import numpy as np
import pytest

from deadline_stop import catalog
from deadline_stop.boundary import Boundary, extract_boundary
from deadline_stop.errors import AssumptionError, ConvergenceError, ParameterError
from deadline_stop.model import DiscountModel, DiscountPair, ProblemSpec
from deadline_stop.montecarlo import evaluate_pi_formulation
from deadline_stop.solver import (
    GridSpec,
    effective_horizon,
    gain,
    pde_residual,
    smooth_fit_gap,
    solve,
    solve_finite,
    solve_infinite,
    time_nodes,
)

from conftest import ALL_EXAMPLES


def test_gain_examples():
    pair = catalog.example_problem("5.1").discounts
    t = 0.3
    root = pair.gain_root(t)
    assert gain(pair, t, root) == pytest.approx(0.0, abs=1e-15)
    assert gain(pair, t, 1.0) == pytest.approx(pair.c1.value(t))
    assert gain(pair, 1.0, 0.8) == pytest.approx(0.8 * math.exp(-1) - 0.2 * math.exp(-0.4))
    assert round(gain(pair, 1.0, 0.8), 6) == 0.160240
    assert gain(pair, t, 0.1) == 0.0


def test_grid_spec_validation():
    with pytest.raises(ParameterError):
        GridSpec(npi=2)
    with pytest.raises(ParameterError):
        GridSpec(psor_tol=0.0)
    with pytest.raises(ParameterError):
        GridSpec(theta_weight=1.5)
    with pytest.raises(ParameterError):
        GridSpec(lcp_method="penalty")
    with pytest.raises(ParameterError):
        GridSpec(time_grading=0.5)


def test_time_nodes():
    t = time_nodes(2.0, 10, 1.0)
    assert np.allclose(t, np.linspace(0, 2, 11))
    g = time_nodes(1.0, 100, 2.0)
    assert g[0] == 0 and g[-1] == 1.0
    steps = np.diff(g)
    assert np.all(np.diff(steps) < 0)
    assert steps[-1] == pytest.approx(1e-4)


def test_short_horizon_value_is_gain():
    base = catalog.example_problem("5.1")
    spec = base.with_horizon(1e-6)
    T = spec.horizon
    s = solve_finite(spec, GridSpec(nt=1, npi=400))
    diff = np.abs(s.v[0] - s.g[0])
    # sqrt(T) at the kink (option value of the belief's spread), T elsewhere
    kappa = 2.0
    assert diff.max() <= kappa * (spec.a / 4) * math.sqrt(T) + 10 * T
    away = np.abs(s.pi_grid - spec.discounts.gain_root(0.0)) > 0.05
    assert diff[away].max() <= 10 * T
    assert s.value_at(0.0, 0.8) == pytest.approx(gain(spec.discounts, 0.0, 0.8), abs=1e-5)


@pytest.fixture(scope="module")
def flat_problem():
    c = DiscountModel.exponential(0.0)
    return ProblemSpec(2.0, -1.0, 0.5, 1.0, DiscountPair(c, c))


def test_flat_discounts_need_gate_off(flat_problem):
    with pytest.raises(AssumptionError) as info:
        solve_finite(flat_problem, GridSpec(nt=50, npi=50))
    assert not info.value.report.passed("A5")


def test_flat_discounts_dominance(flat_problem):
    s = solve_finite(flat_problem, GridSpec(nt=400, npi=400), check_assumptions=False)
    pi = s.pi_grid
    row = s.v[0]
    assert np.all(row[pi > 0.5] >= 2 * pi[pi > 0.5] - 1 - 1e-12)
    # constant-threshold hitting policies never beat the value
    t = s.t_grid[:-1]
    c1 = np.ones_like(t)
    for level in (0.6, 0.75, 0.9):
        bd = Boundary(t, np.full_like(t, level), c1, c1, 1.0, 0.5)
        st = evaluate_pi_formulation(flat_problem, bd, 20_000, 0.005, 3)
        assert st.mean_payoff <= s.value_at(0.0, 0.5) + 3 * st.std_error


def test_convergence_error_reports_time():
    spec = catalog.example_problem("5.1")
    with pytest.raises(ConvergenceError) as info:
        solve_finite(spec, GridSpec(nt=20, npi=200, lcp_method="psor", psor_max_iter=1, psor_tol=1e-14))
    assert info.value.t is not None and info.value.residual > 0


def test_solve_dispatch_and_finite_only():
    spec = catalog.example_problem("5.1")
    with pytest.raises(ParameterError):
        solve_infinite(spec, GridSpec(nt=10, npi=10))
    with pytest.raises(ParameterError):
        solve_finite(spec.with_horizon(math.inf), GridSpec(nt=10, npi=10))
    s = solve(spec, GridSpec(nt=20, npi=20))
    assert s.t_grid.size == 21 and s.pi_grid.size == 22


@pytest.mark.parametrize("name", ALL_EXAMPLES)
def test_surface_invariants(name, solved):
    s = solved(name, 1000).surface
    pair = catalog.example_problem(name).discounts
    v, g = s.v, s.g
    assert np.all(v >= g - 1e-12)
    assert np.array_equal(v[-1], g[-1])
    assert np.all(v[:, 0] == 0.0)
    assert np.allclose(v[:, -1], pair.c1.value(s.t_grid), rtol=0, atol=1e-15)
    scale = pair.c0.value(0.0) + pair.c1.value(0.0)
    assert np.diff(v, axis=1).min() >= -1e-9
    assert np.diff(v, 2, axis=1).min() >= -1e-8 * scale
    lip = np.abs(np.diff(v, axis=1)) / s.dpi
    bound = (pair.c0.value(s.t_grid) + pair.c1.value(s.t_grid))[:, None] + 10 * s.dpi
    assert np.all(lip <= bound)


@pytest.mark.parametrize("name", ALL_EXAMPLES)
def test_time_monotone_in_continuation(name, solved):
    s = solved(name, 1000).surface
    both = ~s.stop_mask[:-1] & ~s.stop_mask[1:]
    assert np.all((s.v[1:] - s.v[:-1])[both] <= 1e-9)


def test_stop_mask_tolerance(solved):
    s = solved("5.1", 1000).surface
    gap = (s.v - s.g)[s.stop_mask]
    assert np.all(np.abs(gap) <= s.contact_tol * (1 + np.abs(s.g[s.stop_mask])))


def test_pde_residual_structure(solved):
    sv = solved("5.1", 1000)
    s, spec = sv.surface, sv.spec
    r = pde_residual(s, spec.discounts)
    assert np.all(r[:, 0] == 0) and np.all(np.abs(r[:, -1]) <= 1e-15)
    assert np.all(np.abs(r[s.stop_mask]) <= GridSpec().psor_tol)
    assert np.array_equal(r[-1], s.v[-1] - s.g[-1])


def test_pde_residual_consistency():
    # Away from the free boundary and the terminal kink the residual is
    # O(dt + dpi^2); the implied constant must not grow under refinement.
    spec = catalog.example_problem("5.1")
    consts = []
    for n in (250, 500, 1000):
        s = solve_finite(spec, GridSpec(nt=n, npi=n))
        bd = extract_boundary(s, spec.discounts)
        r = pde_residual(s, spec.discounts)[:-1]
        pi = s.pi_grid[None, :]
        sel = (pi <= bd.b[:, None] - 0.05) & (pi > 0) & (s.t_grid[:-1, None] <= 0.9)
        h = np.diff(s.t_grid).max() + s.dpi**2
        consts.append(np.abs(r[sel]).max() / h)
    assert consts[-1] <= 1.5 * consts[0]


def test_smooth_fit_gap_bound(solved):
    sv = solved("5.1", 2000)
    gap = smooth_fit_gap(sv.surface, sv.boundary)
    assert np.isfinite(gap).sum() > 0.9 * gap.size
    assert np.nanmax(np.abs(gap)) <= 5 * 2.0 * sv.surface.dpi


def test_stopping_region_slope_is_gain_slope(solved):
    sv = solved("5.1", 1000)
    s, bd = sv.surface, sv.boundary
    for i in (0, 300, 700):
        j = bd.contact_index[i]
        q = (s.v[i, j + 6] - s.v[i, j + 5]) / s.dpi
        assert q == pytest.approx(bd.c0[i] + bd.c1[i], abs=1e-6)


def test_value_grid_convergence():
    spec = catalog.example_problem("5.1")
    vals = [solve_finite(spec, GridSpec(nt=n, npi=n)).value_at(0.0, 0.5) for n in (250, 500, 1000, 2000)]
    d = np.abs(np.diff(vals))
    for k in range(1, len(d)):
        ratio = d[k - 1] / d[k]
        extrapolated = d[k - 1] / (ratio - 1) if ratio > 1 else d[k - 1]
        assert d[k] <= 4 * extrapolated


def test_effective_horizon_clips_at_zero():
    c0 = DiscountModel.linear(1.0, -2.0)  # zero at t = 0.5
    c1 = DiscountModel.exponential(1.0)
    pair = DiscountPair(c0, c1)
    assert effective_horizon(pair, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert effective_horizon(pair, 0.4) == 0.4


def test_infinite_horizon_sequence():
    spec = catalog.example_problem("5.1", horizon=math.inf)
    s = solve_infinite(spec, GridSpec(nt=100, npi=200))
    d = s.sup_differences
    assert all(x >= y for x, y in zip(d[1:], d[2:]))
    assert min(s.min_increments) >= -1e-10
    assert d[-1] < GridSpec().horizon_tail_tol
    assert s.horizon == pytest.approx(s.horizon_sequence[-2] / 2)


def test_infinite_horizon_gate():
    flat0 = DiscountModel.smoothed_steps([(-0.5, 0.0)], 1.0)
    flat1 = DiscountModel.smoothed_steps([(-0.25, 0.0)], 3.0)
    spec = ProblemSpec(2.0, -1.0, 0.5, math.inf, DiscountPair(flat0, flat1))
    with pytest.raises(AssumptionError):
        solve_infinite(spec, GridSpec(nt=10, npi=10))


def test_infinite_horizon_cap():
    spec = catalog.example_problem("5.1", horizon=math.inf)
    with pytest.raises(ConvergenceError):
        solve_infinite(spec, GridSpec(nt=20, npi=40, max_doublings=2))
