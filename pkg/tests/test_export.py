from __future__ import annotations

import json
import math
import struct

import numpy as np
import pytest

from conftest import solved_example
from deadline_stop import catalog
from deadline_stop.export import (
    SVG_HEIGHT,
    SVG_WIDTH,
    boundary_svg,
    dumps_json,
    file_sha256,
    parse_boundary_svg,
    read_boundary_csv,
    read_surface_binary,
    write_boundary_csv,
    write_paths_csv,
    write_stats_json,
    write_surface_binary,
    write_surface_csv,
)
from deadline_stop.posterior import paths_to_csv_rows, simulate_paths
from deadline_stop.solver import GridSpec, solve_finite


@pytest.fixture(scope="module")
def small():
    spec = catalog.example_problem("5.1")
    return solve_finite(spec, GridSpec(nt=30, npi=40))


def test_surface_binary_round_trip(small, tmp_path):
    path = tmp_path / "s.bin"
    write_surface_binary(small, path)
    back = read_surface_binary(path, a=small.a, contact_tol=small.contact_tol)
    for name in ("t_grid", "pi_grid", "v", "g"):
        assert np.array_equal(getattr(back, name), getattr(small, name))
    assert np.array_equal(back.stop_mask, small.stop_mask)


def test_surface_binary_layout(small, tmp_path):
    path = tmp_path / "s.bin"
    write_surface_binary(small, path)
    raw = path.read_bytes()
    rows, cols = small.t_grid.size, small.pi_grid.size
    assert struct.unpack("<QQ", raw[:16]) == (rows - 1, cols - 2)
    assert len(raw) == 16 + 8 * (rows + cols + 2 * rows * cols)
    assert struct.unpack("<d", raw[16:24])[0] == small.t_grid[0]
    v_off = 16 + 8 * (rows + cols)
    # V is row-major with time as the row index
    assert struct.unpack("<d", raw[v_off + 8 * (cols + 3) : v_off + 8 * (cols + 4)])[0] == small.v[1, 3]


def test_surface_binary_rejects_truncation(small, tmp_path):
    path = tmp_path / "s.bin"
    write_surface_binary(small, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_surface_binary(path)


def test_surface_csv_stride(small, tmp_path):
    path = tmp_path / "s.csv"
    write_surface_csv(small, path, stride=7)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,pi,v,g,stop_flag"
    rows = [line.split(",") for line in lines[1:]]
    ts = sorted({float(r[0]) for r in rows})
    pis = sorted({float(r[1]) for r in rows})
    assert ts[-1] == small.horizon and ts[0] == 0.0
    assert pis[0] == 0.0 and pis[-1] == 1.0
    assert len(rows) == len(ts) * len(pis)
    assert {r[4] for r in rows} <= {"0", "1"}


def test_boundary_csv_round_trip(tmp_path):
    bd = solved_example("5.1").boundary
    res = np.linspace(0, 1, bd.t_grid.size)
    path = tmp_path / "b.csv"
    write_boundary_csv(bd, path, res)
    back = read_boundary_csv(path)
    assert np.array_equal(back["t"][:-1], bd.t_grid)
    assert np.array_equal(back["b"][:-1], bd.b)
    assert np.array_equal(back["b_check"][:-1], bd.b_check)
    assert np.array_equal(back["residual"][:-1], res)
    assert back["method"][-1] == "terminal"
    assert back["t"][-1] == bd.horizon and back["b"][-1] == bd.b_terminal


def test_paths_csv(tmp_path):
    spec = catalog.example_problem("5.1")
    paths = simulate_paths(spec, 3, 0.25, seed=1)
    path = tmp_path / "p.csv"
    write_paths_csv(paths_to_csv_rows(paths), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sample_id,t,x,pi,theta,deadline_flag"
    assert len(lines) == 1 + 3 * 5


def test_json_helpers(tmp_path):
    text = dumps_json({"b": math.nan, "a": [1.0, math.inf], "c": np.float64(2.5)})
    assert json.loads(text) == {"a": [1.0, "inf"], "b": None, "c": 2.5}
    assert text.index('"a"') < text.index('"b"')
    path = tmp_path / "stats.json"
    write_stats_json({"mean_payoff": 0.2}, {"seed": 1}, path)
    assert json.loads(path.read_text()) == {"meta": {"seed": 1}, "stats": {"mean_payoff": 0.2}}
    first = file_sha256(path)
    write_stats_json({"mean_payoff": 0.2}, {"seed": 1}, path)
    assert file_sha256(path) == first


def test_svg_round_trip():
    bd = solved_example("5.1").boundary
    svg = boundary_svg(bd, title="ex")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert f'width="{SVG_WIDTH}"' in svg and f'height="{SVG_HEIGHT}"' in svg
    t, b, limit = parse_boundary_svg(svg)
    assert limit == bd.b_terminal
    assert t.size == bd.t_grid.size
    # coordinates are written with three decimals
    assert np.abs(t - bd.t_grid).max() < 1e-4
    assert np.abs(b - bd.b).max() < 1e-4


def test_svg_is_deterministic():
    bd = solved_example("5.2").boundary
    assert boundary_svg(bd) == boundary_svg(bd)
