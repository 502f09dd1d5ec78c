"""Command line front end.

Verbs: ``validate``, ``solve``, ``verify``, ``simulate``, ``examples``.

Exit codes:
    0  success
    1  configuration could not be parsed or refers to an unknown example
    2  discount assumptions fail
    3  the value solver did not converge
    4  ``simulate --assert``: Monte Carlo mean more than 3 SE from V(0, p)
    5  ``verify``: an active verification assertion failed
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import catalog, export
from ._jit import max_workers
from .boundary import (
    Boundary,
    check_monotone_transformed,
    extract_boundary,
    integral_equation_residual,
    shape_features,
    terminal_limit,
    transform_boundary,
)
from .errors import AssumptionError, ConfigurationError, ConvergenceError, DeadlineStopError
from .model import ProblemSpec, validate_assumptions
from .montecarlo import compare_formulations, evaluate_pi_formulation
from .solver import GridSpec, ValueSurface, gain, smooth_fit_gap, solve

log = logging.getLogger("deadline_stop")

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTIONS, EXIT_SOLVER, EXIT_MC, EXIT_VERIFY = 0, 1, 2, 3, 4, 5


@dataclass
class Quadrature:
    quad_n: int = 16
    residual_stride: int = 4


@dataclass
class MCSettings:
    n: int = 200_000
    dt: float = 5e-4
    seed: int = 0


@dataclass
class Outputs:
    dir: str = "out"
    surface_binary: bool = True
    surface_csv: bool = True
    surface_csv_stride: int = 20
    svg: bool = True


@dataclass
class RunConfig:
    problem: dict | None = None
    example: str | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    quadrature: Quadrature = field(default_factory=Quadrature)
    mc: MCSettings = field(default_factory=MCSettings)
    outputs: Outputs = field(default_factory=Outputs)
    check_assumptions: bool | None = None

    def build_problem(self) -> ProblemSpec:
        if self.example is not None:
            return catalog.example_problem(self.example)
        return catalog.problem_from_dict(self.problem)

    @property
    def label(self) -> str:
        return self.example if self.example is not None else "problem"

    @property
    def gated(self) -> bool:
        if self.check_assumptions is not None:
            return self.check_assumptions
        return catalog.example_checks_assumptions(self.example) if self.example is not None else True


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigurationError(f"unknown {name} keys: {', '.join(sorted(extra))}")
    try:
        return cls(**data)
    except (TypeError, ValueError, DeadlineStopError) as exc:
        raise ConfigurationError(f"bad {name} section: {exc}") from exc


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigurationError("config must be a JSON object")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version must be {SCHEMA_VERSION}")
    allowed = {"schema_version", "problem", "example", "grid", "quadrature", "mc", "outputs", "check_assumptions"}
    extra = set(d) - allowed
    if extra:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(extra))}")
    if ("problem" in d) == ("example" in d):
        raise ConfigurationError("config needs exactly one of 'problem' and 'example'")
    example = d.get("example")
    grid_data = dict(d.get("grid") or {})
    if example is not None:
        catalog.example_entry(str(example))
        grid_data = {**catalog.example_grid_overrides(str(example)), **grid_data}
    cfg = RunConfig(
        problem=d.get("problem"),
        example=None if example is None else str(example),
        grid=_section(GridSpec, grid_data, "grid"),
        quadrature=_section(Quadrature, d.get("quadrature"), "quadrature"),
        mc=_section(MCSettings, d.get("mc"), "mc"),
        outputs=_section(Outputs, d.get("outputs"), "outputs"),
        check_assumptions=d.get("check_assumptions"),
    )
    if cfg.problem is not None:
        cfg.build_problem()
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nt, npi = text.lower().split("x")
        return int(nt), int(npi)
    except ValueError as exc:
        raise ConfigurationError(f"--grid expects NTxNPI, got {text!r}") from exc


def _ensure_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise ConfigurationError(f"output directory {path} is not writable: {exc}") from exc


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "grid", None):
        nt, npi = _parse_grid(args.grid)
        try:
            cfg.grid = replace(cfg.grid, nt=nt, npi=npi)
        except DeadlineStopError as exc:
            raise ConfigurationError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.mc = replace(cfg.mc, seed=args.seed)
    if getattr(args, "out", None):
        cfg.outputs = replace(cfg.outputs, dir=args.out)
    return cfg


class _Printer:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


# -- pipeline pieces -----------------------------------------------------------


@dataclass
class Solved:
    spec: ProblemSpec
    surface: ValueSurface
    boundary: Boundary
    residual: np.ndarray
    v0: float


def _solve(cfg: RunConfig) -> Solved:
    spec = cfg.build_problem()
    surface = solve(spec, cfg.grid, check_assumptions=cfg.gated)
    boundary = extract_boundary(surface, spec.discounts)
    if np.all((boundary.b > 0) & (boundary.b < 1)):
        transform_boundary(boundary)
    if spec.infinite:
        residual = np.full(boundary.t_grid.size, math.nan)
    else:
        residual = integral_equation_residual(
            boundary, spec, quad_n=cfg.quadrature.quad_n, stride=cfg.quadrature.residual_stride
        )
    return Solved(spec, surface, boundary, residual, surface.value_at(0.0, spec.p))


def _write_solve_outputs(cfg: RunConfig, res: Solved, out: Path) -> Path:
    o = cfg.outputs
    if o.surface_binary:
        export.write_surface_binary(res.surface, out / "surface.bin")
    if o.surface_csv:
        export.write_surface_csv(res.surface, out / "surface.csv", stride=o.surface_csv_stride)
    bpath = out / "boundary.csv"
    export.write_boundary_csv(res.boundary, bpath, res.residual)
    if o.svg:
        svg = export.boundary_svg(res.boundary, title=f"boundary {cfg.label}")
        (out / "boundary.svg").write_text(svg, encoding="utf-8")
    return bpath


@dataclass
class Verification:
    max_residual: float
    residual_tol: float
    smooth_fit_gap: float
    smooth_fit_tol: float
    envelope_margin: float
    envelope_tol: float
    monotone_active: bool
    monotone_passed: bool
    monotone_violation: float
    terminal_gap: float
    terminal_tol: float
    shape: str

    @property
    def checks(self) -> dict[str, bool]:
        out = {
            "residual": not (self.max_residual > self.residual_tol),
            "envelope": self.envelope_margin >= -self.envelope_tol,
            "terminal_limit": self.terminal_gap <= self.terminal_tol,
        }
        if self.monotone_active:
            out["monotone_transformed"] = self.monotone_passed
            out["smooth_fit"] = not (self.smooth_fit_gap > self.smooth_fit_tol)
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _verify(res: Solved) -> Verification:
    spec, bd, surface = res.spec, res.boundary, res.surface
    pair = spec.discounts
    scale = float(pair.c0.value(0.0) + pair.c1.value(0.0))
    dpi = surface.dpi
    report = validate_assumptions(pair, spec.horizon)
    mono = check_monotone_transformed(bd, report) if bd.b_check is not None else None
    gap = smooth_fit_gap(surface, bd)
    finite_gap = gap[np.isfinite(gap)]
    resid = res.residual[np.isfinite(res.residual)]
    if spec.infinite:
        tgap = math.nan
    else:
        tgap = abs(bd.b_left_limit - bd.b_terminal)
    return Verification(
        max_residual=float(resid.max()) if resid.size else math.nan,
        residual_tol=5e-3 * scale,
        smooth_fit_gap=float(np.abs(finite_gap).max()) if finite_gap.size else math.nan,
        smooth_fit_tol=5.0 * scale * dpi,
        envelope_margin=float(np.min(bd.b - bd.gain_root())),
        envelope_tol=dpi,
        monotone_active=bool(mono is not None and mono.active),
        monotone_passed=bool(mono is None or mono.passed),
        monotone_violation=float(mono.max_violation) if mono is not None else math.nan,
        terminal_gap=tgap,
        terminal_tol=10.0 * dpi if not spec.infinite else math.inf,
        shape=shape_features(*bd.knots(), bd.horizon).label if not spec.infinite else "n/a",
    )


# -- commands ------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, say) -> int:
    spec = cfg.build_problem()
    report = validate_assumptions(spec.discounts, spec.horizon)
    say(report.table())
    if not report.ok:
        say(f"assumptions FAIL ({report.mode} mode)")
        return EXIT_ASSUMPTIONS
    if not report.strict_ok:
        log.warning("strict assumptions fail; relaxed conditions hold")
        say("assumptions pass (relaxed)")
    else:
        say("assumptions pass")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, say) -> int:
    out = Path(cfg.outputs.dir)
    res = _solve(cfg)
    _write_solve_outputs(cfg, res, out)
    say(f"V(0,{res.spec.p:g}) = {res.v0:.6f}")
    say(f"G(0,{res.spec.p:g}) = {gain(res.spec.discounts, 0.0, res.spec.p):.6f}")
    if res.spec.infinite:
        say(f"horizons: {', '.join(f'{h:g}' for h in res.surface.horizon_sequence)}")
        say(f"sup differences: {', '.join(f'{d:.3e}' for d in res.surface.sup_differences)}")
    else:
        say(f"terminal limit c0(T)/(c0(T)+c1(T)) = {res.boundary.b_terminal:.6f}")
        say(f"b at last node before T = {res.boundary.b_left_limit:.6f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, say) -> int:
    res = _solve(cfg)
    ver = _verify(res)
    say(f"max integral-equation residual {ver.max_residual:.3e} (tol {ver.residual_tol:.3e})")
    say(f"max smooth-fit gap {ver.smooth_fit_gap:.3e} (tol {ver.smooth_fit_tol:.3e})")
    say(f"lower-envelope margin {ver.envelope_margin:.3e} (tol -{ver.envelope_tol:.3e})")
    say(f"terminal gap {ver.terminal_gap:.3e} (tol {ver.terminal_tol:.3e})")
    state = "inactive" if not ver.monotone_active else ("pass" if ver.monotone_passed else "FAIL")
    say(f"transformed-boundary monotonicity: {state} (max violation {ver.monotone_violation:.3e})")
    say(f"boundary shape: {ver.shape}")
    for name, ok in ver.checks.items():
        say(f"  {name:<22} {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ver.passed else EXIT_VERIFY


def cmd_simulate(cfg: RunConfig, say, assert_agreement: bool) -> int:
    out = Path(cfg.outputs.dir)
    res = _solve(cfg)
    if res.spec.infinite:
        raise ConfigurationError("simulation needs a finite horizon")
    bpath = out / "boundary.csv"
    export.write_boundary_csv(res.boundary, bpath, res.residual)
    mc = cfg.mc
    stats: dict = {}
    if res.spec.discounts.deadline_interpretable:
        pol, pif, diff, se = compare_formulations(res.spec, res.boundary, mc.n, mc.dt, mc.seed)
        stats["policy"] = pol.to_dict()
        stats["pi_formulation"] = pif.to_dict()
        stats["paired_difference"] = {"mean": diff, "std_error": se}
        primary = pol
    else:
        pif = evaluate_pi_formulation(res.spec, res.boundary, mc.n, mc.dt, mc.seed)
        stats["pi_formulation"] = pif.to_dict()
        primary = pif
    z = (primary.mean_payoff - res.v0) / primary.std_error if primary.std_error > 0 else 0.0
    meta = {
        "seed": mc.seed,
        "n": mc.n,
        "dt": mc.dt,
        "boundary_file": bpath.name,
        "boundary_sha256": export.file_sha256(bpath),
        "value_at_prior": res.v0,
        "z_score": z,
    }
    export.write_stats_json(stats, meta, out / "stats.json")
    for k, s in stats.items():
        if "mean_payoff" in s:
            say(f"{k:<15} mean {s['mean_payoff']:.6f}  se {s['std_error']:.6f}")
    say(f"V(0,{res.spec.p:g}) = {res.v0:.6f}; z = {z:+.2f}")
    if assert_agreement and abs(z) > 3.0:
        say("Monte Carlo mean disagrees with V(0,p) beyond 3 SE")
        return EXIT_MC
    return EXIT_OK


SUMMARY_COLUMNS = (
    "example", "terminal_limit", "b_last_node", "terminal_gap", "terminal_ok", "value_at_prior",
    "max_residual", "monotone", "shape", "expected_shape",
)


def _example_row(name: str, base: RunConfig, out: Path) -> dict:
    grid = replace(base.grid, **catalog.example_grid_overrides(name))
    cfg = replace(base, example=name, problem=None, grid=grid, outputs=replace(base.outputs, dir=str(out / name)))
    sub = Path(cfg.outputs.dir)
    sub.mkdir(parents=True, exist_ok=True)
    res = _solve(cfg)
    _write_solve_outputs(cfg, res, sub)
    ver = _verify(res)
    mono = "inactive" if not ver.monotone_active else ("pass" if ver.monotone_passed else "fail")
    return {
        "example": name,
        "terminal_limit": terminal_limit(res.spec.discounts, res.spec.horizon),
        "b_last_node": res.boundary.b_left_limit,
        "terminal_gap": ver.terminal_gap,
        "terminal_ok": int(ver.terminal_gap <= ver.terminal_tol),
        "value_at_prior": res.v0,
        "max_residual": ver.max_residual,
        "monotone": mono,
        "shape": ver.shape,
        "expected_shape": catalog.example_entry(name).get("shape", ""),
    }


def cmd_examples(which: str, base: RunConfig, say) -> int:
    names = catalog.example_names() if which == "all" else [which]
    for n in names:
        catalog.example_entry(n)
    out = Path(base.outputs.dir)
    workers = min(max_workers(), len(names))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda n: _example_row(n, base, out), names))
    else:
        rows = [_example_row(n, base, out) for n in names]
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in rows:
        lines.append(",".join(export._fmt(r[c]) if isinstance(r[c], float) else str(r[c]) for c in SUMMARY_COLUMNS))
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for r in rows:
        say(
            f"{r['example']}: limit {r['terminal_limit']:.6f} last {r['b_last_node']:.6f} "
            f"V0 {r['value_at_prior']:.6f} residual {r['max_residual']:.2e} monotone {r['monotone']} shape {r['shape']}"
        )
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--example", metavar="NAME", help="catalog example instead of --config")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--assert", dest="assert_", action="store_true", help="fail on MC/PDE disagreement")
    common.add_argument("--grid", metavar="NTxNPI", help="grid size, e.g. 2000x2000")
    common.add_argument("--quiet", action="store_true", help="suppress the printed report")
    parser = argparse.ArgumentParser(
        prog="deadline-stop", description="Optimal stopping before a drift-dependent deadline."
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, hlp in (
        ("validate", "check the discount assumptions"),
        ("solve", "solve for the value surface and boundary"),
        ("verify", "solve and run the verification checks"),
        ("simulate", "Monte Carlo replay of the solved policy"),
    ):
        sub.add_parser(verb, parents=[common], help=hlp)
    ex = sub.add_parser("examples", parents=[common], help="run the example catalog")
    ex.add_argument("which", nargs="?", default="all", help="'all' or an example name")
    return parser


def _config_for(args) -> RunConfig:
    if args.config and args.example:
        raise ConfigurationError("give --config or --example, not both")
    if args.config:
        return load_config(args.config)
    if args.example:
        return config_from_dict({"schema_version": SCHEMA_VERSION, "example": args.example})
    if args.verb == "examples":
        return RunConfig()
    raise ConfigurationError("no configuration: pass --config PATH or --example NAME")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    say = _Printer(args.quiet)
    try:
        cfg = _apply_flags(_config_for(args), args)
        if args.verb != "validate":
            _ensure_writable(Path(cfg.outputs.dir))
        if args.verb == "validate":
            return cmd_validate(cfg, say)
        if args.verb == "solve":
            return cmd_solve(cfg, say)
        if args.verb == "verify":
            return cmd_verify(cfg, say)
        if args.verb == "simulate":
            return cmd_simulate(cfg, say, args.assert_)
        return cmd_examples(args.which, cfg, say)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DeadlineStopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
