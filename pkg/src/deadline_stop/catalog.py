"""The six worked examples, stored as data in ``data/examples.json``."""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

from .errors import ConfigurationError
from .model import DiscountModel, DiscountPair, ProblemSpec, embed_original


@lru_cache(maxsize=1)
def load_catalog() -> dict:
    text = resources.files("deadline_stop").joinpath("data/examples.json").read_text(encoding="utf-8")
    return json.loads(text)


def example_names() -> list[str]:
    return list(load_catalog()["examples"])


def example_entry(name: str) -> dict:
    ex = load_catalog()["examples"]
    if name not in ex:
        raise ConfigurationError(f"unknown example {name!r}; known: {', '.join(ex)}")
    return ex[name]


def discount_from_dict(d: dict) -> DiscountModel:
    try:
        kind = d["kind"]
        scale = float(d.get("scale", 1.0))
        limit = d.get("limit")
        if kind == "exponential":
            return DiscountModel.exponential(d["rate"], scale=scale)
        if kind == "linear":
            return DiscountModel.linear(d["intercept"], d["slope"], scale=scale, limit=limit)
        if kind == "smoothed_step":
            return DiscountModel.smoothed_steps(
                [tuple(s) for s in d.get("steps", [])],
                d["sharpness"],
                intercept=d.get("intercept", 1.0),
                slope=d.get("slope", 0.0),
                scale=scale,
                limit=limit,
            )
        if kind == "tabulated":
            return DiscountModel.tabulated(d["knots"], scale=scale, limit=limit)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad discount declaration {d!r}: {exc}") from exc
    raise ConfigurationError(f"unknown discount kind {kind!r}")


def problem_from_dict(d: dict) -> ProblemSpec:
    """Build a problem from a declaration.

    Either ``survival0``/``survival1`` (deadline survivals, embedded through
    the drift parameters) or ``c0``/``c1`` (discounts used as given).
    """
    try:
        a = float(d["a"])
        b = float(d["b"])
        p = float(d.get("p", d.get("prior", 0.5)))
        h = d.get("horizon", 1.0)
        horizon = math.inf if h in ("inf", "infinity", None) else float(h)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad problem declaration: {exc}") from exc
    mode = d.get("assumption_mode", "strict")
    if "survival0" in d:
        pair = embed_original(
            a, b, discount_from_dict(d["survival0"]), discount_from_dict(d["survival1"]),
            assumption_mode=mode, horizon=horizon,
        )
    elif "c0" in d:
        pair = DiscountPair(discount_from_dict(d["c0"]), discount_from_dict(d["c1"]), assumption_mode=mode)
    else:
        raise ConfigurationError("problem needs survival0/survival1 or c0/c1")
    return ProblemSpec(a=a, b=b, p=p, horizon=horizon, discounts=pair)


def example_problem(name: str, horizon: float | None = None, prior: float | None = None) -> ProblemSpec:
    cat = load_catalog()
    entry = dict(example_entry(name))
    entry.setdefault("horizon", cat["horizon"])
    entry.setdefault("p", cat["prior"])
    if horizon is not None:
        entry["horizon"] = horizon
    if prior is not None:
        entry["p"] = prior
    return problem_from_dict(entry)


def example_checks_assumptions(name: str) -> bool:
    return bool(example_entry(name).get("check_assumptions", True))


def example_grid_overrides(name: str) -> dict:
    """Per-example ``GridSpec`` field overrides (e.g. a fully implicit scheme)."""
    return dict(example_entry(name).get("grid", {}))
