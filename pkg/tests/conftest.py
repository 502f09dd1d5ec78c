from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import pytest

from deadline_stop import catalog
from deadline_stop.boundary import Boundary, extract_boundary, transform_boundary
from deadline_stop.model import ProblemSpec
from deadline_stop.solver import GridSpec, ValueSurface, solve_finite

ALL_EXAMPLES = ("5.1", "5.2", "5.3", "5.4", "5.5", "5.6")
DEADLINE_EXAMPLES = ("5.1", "5.2", "5.3", "5.5")


@dataclass
class Solved:
    spec: ProblemSpec
    surface: ValueSurface
    boundary: Boundary


def example_grid(name: str, n: int) -> GridSpec:
    return replace(GridSpec(nt=n, npi=n), **catalog.example_grid_overrides(name))


@lru_cache(maxsize=None)
def solved_example(name: str, n: int = 2000) -> Solved:
    spec = catalog.example_problem(name)
    surface = solve_finite(spec, example_grid(name, n), check_assumptions=catalog.example_checks_assumptions(name))
    bd = extract_boundary(surface, spec.discounts)
    transform_boundary(bd)
    return Solved(spec, surface, bd)


@pytest.fixture
def ex51():
    return catalog.example_problem("5.1")


@pytest.fixture
def solved():
    return solved_example


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(label, ok, detail)`` prints and records one pass/fail line."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label:<44} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
