"""File formats: surfaces, boundaries, paths, statistics and SVG plots.

Floats are written with ``repr`` so that identical inputs give
byte-identical files.

Binary surface layout (all little-endian)::

    offset 0    uint64  nt          number of time steps
    offset 8    uint64  npi         number of interior belief nodes
    offset 16   float64[nt+1]       t_grid
    then        float64[npi+2]      pi_grid
    then        float64[(nt+1)*(npi+2)]  V, row-major (row = time)
    then        float64[(nt+1)*(npi+2)]  G, row-major

The stop mask is not stored; it is recomputed from ``V - G`` and the
contact tolerance.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .boundary import Boundary
from .solver import ValueSurface

_HEADER = np.dtype("<u8")
_F8 = np.dtype("<f8")


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_surface_binary(surface: ValueSurface, path) -> None:
    nt = surface.t_grid.size - 1
    npi = surface.pi_grid.size - 2
    with open(path, "wb") as fh:
        fh.write(np.array([nt, npi], dtype=_HEADER).tobytes())
        for arr in (surface.t_grid, surface.pi_grid, surface.v, surface.g):
            fh.write(np.ascontiguousarray(arr, dtype=_F8).tobytes())


def read_surface_binary(path, a: float = math.nan, contact_tol: float = 1e-10) -> ValueSurface:
    raw = Path(path).read_bytes()
    nt, npi = (int(v) for v in np.frombuffer(raw, dtype=_HEADER, count=2))
    body = np.frombuffer(raw, dtype=_F8, offset=16)
    rows, cols = nt + 1, npi + 2
    expected = rows + cols + 2 * rows * cols
    if body.size != expected:
        raise ValueError(f"surface file has {body.size} doubles, expected {expected}")
    t = body[:rows].copy()
    pi = body[rows : rows + cols].copy()
    off = rows + cols
    v = body[off : off + rows * cols].reshape(rows, cols).copy()
    g = body[off + rows * cols :].reshape(rows, cols).copy()
    stop = (v - g) <= contact_tol * (1.0 + np.abs(g))
    return ValueSurface(t, pi, v, g, stop, a, contact_tol)


def write_surface_csv(surface: ValueSurface, path, stride: int = 1) -> None:
    """Long format ``t, pi, v, g, stop_flag`` on every ``stride``-th node.

    The last time row and both belief edges are always included.
    """
    ti = np.unique(np.r_[np.arange(0, surface.t_grid.size, stride), surface.t_grid.size - 1])
    pj = np.unique(np.r_[np.arange(0, surface.pi_grid.size, stride), surface.pi_grid.size - 1])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,pi,v,g,stop_flag\n")
        for i in ti:
            t = _fmt(surface.t_grid[i])
            for j in pj:
                fh.write(
                    f"{t},{_fmt(surface.pi_grid[j])},{_fmt(surface.v[i, j])},{_fmt(surface.g[i, j])},"
                    f"{int(surface.stop_mask[i, j])}\n"
                )


def write_boundary_csv(boundary: Boundary, path, residual=None) -> None:
    """Rows ``t, b, b_check, method, residual``; a final ``terminal`` row at ``T``."""
    n = boundary.t_grid.size
    bc = boundary.b_check if boundary.b_check is not None else np.full(n, math.nan)
    res = np.full(n, math.nan) if residual is None else np.asarray(residual, dtype=float)
    methods = boundary.method if len(boundary.method) == n else [""] * n
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,b,b_check,method,residual\n")
        for i in range(n):
            fh.write(f"{_fmt(boundary.t_grid[i])},{_fmt(boundary.b[i])},{_fmt(bc[i])},{methods[i]},{_fmt(res[i])}\n")
        fh.write(f"{_fmt(boundary.horizon)},{_fmt(boundary.b_terminal)},0.0,terminal,nan\n")


def read_boundary_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "t": np.array([float(r["t"]) for r in rows]),
        "b": np.array([float(r["b"]) for r in rows]),
        "b_check": np.array([float(r["b_check"]) for r in rows]),
        "method": np.array([r["method"] for r in rows]),
        "residual": np.array([float(r["residual"]) for r in rows]),
    }


def write_paths_csv(rows, path) -> None:
    """Rows from :func:`deadline_stop.posterior.paths_to_csv_rows`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("sample_id,t,x,pi,theta,deadline_flag\n")
        for sid, t, x, pi, theta, flag in rows:
            fh.write(f"{sid},{_fmt(t)},{_fmt(x)},{_fmt(pi)},{theta},{flag}\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_stats_json(stats: dict, meta: dict, path) -> None:
    """Statistics dictionaries plus run metadata (seed, n, dt, boundary hash)."""
    Path(path).write_text(dumps_json({"stats": stats, "meta": meta}), encoding="utf-8")


# -- SVG ------------------------------------------------------------------

SVG_WIDTH, SVG_HEIGHT = 800, 600
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 30, 40, 60


def _to_px(t, b, horizon):
    w = SVG_WIDTH - _LEFT - _RIGHT
    h = SVG_HEIGHT - _TOP - _BOTTOM
    return _LEFT + np.asarray(t) / horizon * w, _TOP + (1.0 - np.asarray(b)) * h


def _from_px(x, y, horizon):
    w = SVG_WIDTH - _LEFT - _RIGHT
    h = SVG_HEIGHT - _TOP - _BOTTOM
    return (np.asarray(x) - _LEFT) / w * horizon, 1.0 - (np.asarray(y) - _TOP) / h


def boundary_svg(boundary: Boundary, title: str = "") -> str:
    """Plot of ``b(t)`` on ``[0, T] x [0, 1]`` with the terminal limit marked."""
    T = boundary.horizon
    tk, bk = boundary.knots()
    xs, ys = _to_px(tk[:-1], bk[:-1], T)
    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" data-horizon="{_fmt(T)}">\n'
    )
    out.write(f"<title>{title}</title>\n")
    out.write(f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>\n')
    x0, y0 = _to_px(0.0, 0.0, T)
    x1, y1 = _to_px(T, 1.0, T)
    out.write(
        f'<path id="axes" d="M{x0:.2f},{y1:.2f} L{x0:.2f},{y0:.2f} L{x1:.2f},{y0:.2f}" '
        'stroke="black" fill="none" stroke-width="1"/>\n'
    )
    for k in range(6):
        frac = k / 5
        xt, _ = _to_px(frac * T, 0.0, T)
        _, yt = _to_px(0.0, frac, T)
        out.write(f'<path d="M{xt:.2f},{y0:.2f} L{xt:.2f},{y0 + 6:.2f}" stroke="black"/>\n')
        out.write(f'<text x="{xt:.2f}" y="{y0 + 22:.2f}" font-size="13" text-anchor="middle">{frac * T:g}</text>\n')
        out.write(f'<path d="M{x0 - 6:.2f},{yt:.2f} L{x0:.2f},{yt:.2f}" stroke="black"/>\n')
        out.write(f'<text x="{x0 - 10:.2f}" y="{yt + 4:.2f}" font-size="13" text-anchor="end">{frac:g}</text>\n')
    out.write(f'<text x="{(x0 + x1) / 2:.2f}" y="{SVG_HEIGHT - 15}" font-size="15" text-anchor="middle">t</text>\n')
    out.write(f'<text x="20" y="{(y0 + y1) / 2:.2f}" font-size="15" text-anchor="middle">b(t)</text>\n')
    pts = " ".join(f"{'M' if i == 0 else 'L'}{x:.3f},{y:.3f}" for i, (x, y) in enumerate(zip(xs, ys)))
    out.write(f'<path id="boundary" d="{pts}" stroke="#1f4e9c" fill="none" stroke-width="2"/>\n')
    mx, my = _to_px(T, boundary.b_terminal, T)
    out.write(
        f'<circle id="terminal-limit" cx="{mx:.3f}" cy="{my:.3f}" r="5" fill="#c0392b" '
        f'data-value="{_fmt(boundary.b_terminal)}"/>\n'
    )
    out.write("</svg>\n")
    return out.getvalue()


def parse_boundary_svg(text: str) -> tuple[np.ndarray, np.ndarray, float]:
    """Recover ``(t, b, terminal_limit)`` from :func:`boundary_svg` output."""
    horizon = float(re.search(r'data-horizon="([^"]+)"', text).group(1))
    d = re.search(r'<path id="boundary" d="([^"]+)"', text).group(1)
    nums = np.array([float(v) for v in re.findall(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?", d)])
    t, b = _from_px(nums[0::2], nums[1::2], horizon)
    limit = float(re.search(r'id="terminal-limit"[^>]*data-value="([^"]+)"', text).group(1))
    return t, b, limit
