"""Experiment configuration files (TOML) and their validation."""
from __future__ import annotations

import ast
import copy
import operator
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import RiemstabError
from .fields import (
    KarcherFieldSpec,
    VectorField,
    isotropy_field,
    karcher_gradient_field,
    killing_rotation_field,
    linear_field,
    zero_field,
)
from .geometry import POINT_TOL, Manifold, ManifoldDescriptor, make_manifold, parse_descriptor
from .integrators import Method, SolverConfig

KINDS = ("sweep", "bifurcation", "global-error", "lognorm", "isotropy", "karcher")


class ConfigError(RiemstabError, ValueError):
    """Invalid experiment configuration (exit status 2)."""


# keys allowed in each table; None marks a leaf
SCHEMA: dict[str, Any] = {
    "experiment": None,
    "description": None,
    "manifold": None,
    "seed": None,
    "output_dir": None,
    "methods": None,
    "c_values": None,
    "z0": None,
    "t_star": None,
    "fine_tol": None,
    "field": {"name": None, "c": None, "targets": None, "weights": None, "A": None},
    "points": {"x0": None, "y0": None},
    "h": {"min": None, "max": None, "count": None, "spacing": None, "values": None},
    "solver": {"tolerance": None, "max_iterations": None, "strategy": None, "predictor": None},
    "region": {"kind": None, "lo": None, "hi": None, "center": None, "radius": None,
               "n_samples": None, "margin": None},
    "bound": {"nu": None, "C": None, "p": None},
    "karcher": {"tol": None},
}

REQUIRED = {
    "sweep": ["manifold", "field", "methods", "points.x0", "points.y0", "h"],
    "bifurcation": ["z0", "h"],
    "global-error": ["manifold", "field", "methods", "points.x0", "t_star", "h"],
    "lognorm": ["manifold", "field", "region"],
    "isotropy": ["c_values", "points.x0", "points.y0", "h"],
    "karcher": ["field"],
}

DEFAULTS = {
    "seed": 0,
    "fine_tol": 1e-11,
    "h.spacing": "linear",
    "solver.tolerance": 1e-12,
    "solver.max_iterations": 50,
    "solver.strategy": "newton-with-fallback",
    "solver.predictor": "explicit-euler",
    "region.n_samples": 200,
    "region.margin": 0.5,
    "karcher.tol": 1e-10,
}


# --------------------------------------------------------------------------
# numbers written as small expressions, e.g. "4*pi" or "pi/2"

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}
_NAMES = {"pi": np.pi, "e": np.e}


def _eval_node(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval_node(node.operand))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in ("sqrt", "exp", "log") \
            and len(node.args) == 1:
        return float(getattr(np, node.func.id)(_eval_node(node.args[0])))
    raise ConfigError(f"unsupported expression element {ast.dump(node)}")


def number(value) -> float:
    """A float from a number or an arithmetic string such as ``"pi/2"``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(_eval_node(ast.parse(value, mode="eval").body))
        except (SyntaxError, ArithmeticError) as exc:
            raise ConfigError(f"cannot evaluate number {value!r}: {exc}") from exc
    raise ConfigError(f"expected a number, got {value!r}")


def array(value) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        return np.array([array(v) if isinstance(v, (list, tuple)) else number(v) for v in value])
    return np.asarray(number(value))


# --------------------------------------------------------------------------
# raw dict handling


def _get(raw: dict, dotted: str, default=None):
    node = raw
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _check_keys(raw: dict, schema: dict, prefix=""):
    for key, value in raw.items():
        path = prefix + key
        if key not in schema:
            raise ConfigError(f"unknown configuration key: {path}")
        sub = schema[key]
        if sub is None:
            if isinstance(value, dict):
                raise ConfigError(f"configuration key {path} must be a value, not a table")
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"configuration key {path} must be a table")
            _check_keys(value, sub, path + ".")


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``key.path=value``; the value is parsed as a TOML value when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        value = text
    parts = key.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-table value")
    node[parts[-1]] = value


def load_raw(path, overrides=()) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for ov in overrides:
        apply_override(raw, ov)
    return raw


# --------------------------------------------------------------------------
# resolved configuration


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict
    manifold: Optional[Manifold] = None
    field: Optional[VectorField] = None
    methods: list = dc_field(default_factory=list)
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    h_grid: list = dc_field(default_factory=list)
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    seed: int = 0
    output_dir: Optional[str] = None

    def get(self, dotted, default=None):
        value = _get(self.raw, dotted)
        if value is None:
            value = DEFAULTS.get(dotted, default)
        return value

    def resolved(self) -> dict:
        """The configuration with every default filled in (written to the manifest)."""
        out = copy.deepcopy(self.raw)
        for dotted, value in DEFAULTS.items():
            head, _, leaf = dotted.partition(".")
            if not leaf:
                out.setdefault(head, value)
            elif head == "solver" or head in out:
                out.setdefault(head, {}).setdefault(leaf, value)
        out["h_grid_resolved"] = [float(h) for h in self.h_grid]
        return out


def h_grid_from(spec: dict) -> list[float]:
    if not isinstance(spec, dict):
        raise ConfigError("h must be a table")
    if "values" in spec:
        values = [number(v) for v in spec["values"]]
        if len(values) < 1:
            raise ConfigError("h grid is empty")
    else:
        for key in ("min", "max", "count"):
            if key not in spec:
                raise ConfigError(f"h.{key} is required")
        lo, hi = number(spec["min"]), number(spec["max"])
        count = spec["count"]
        if not isinstance(count, int) or count < 2:
            raise ConfigError("h.count must be an integer >= 2")
        if not lo > 0:
            raise ConfigError("h.min must be > 0")
        if hi < lo:
            raise ConfigError("h.max must be >= h.min")
        spacing = spec.get("spacing", "linear")
        if spacing == "linear":
            values = list(np.linspace(lo, hi, count))
        elif spacing == "log":
            values = list(np.geomspace(lo, hi, count))
        else:
            raise ConfigError(f"h.spacing must be 'linear' or 'log', got {spacing!r}")
    if any(not h > 0 for h in values):
        raise ConfigError("all step sizes must be > 0")
    return [float(h) for h in values]


def build_field(spec: dict, manifold: Optional[Manifold]) -> VectorField:
    name = spec.get("name")
    if name == "killing":
        return killing_rotation_field()
    if name == "isotropy":
        return isotropy_field(number(spec.get("c", 1.0)))
    if name == "karcher":
        if "targets" not in spec:
            raise ConfigError("karcher field needs field.targets")
        targets = tuple(array(Y) for Y in spec["targets"])
        weights = tuple(number(w) for w in spec["weights"]) if "weights" in spec else None
        return karcher_gradient_field(KarcherFieldSpec(targets, weights))
    if name == "linear":
        if "A" not in spec:
            raise ConfigError("linear field needs field.A")
        return linear_field(array(spec["A"]))
    if name == "zero":
        if manifold is None:
            raise ConfigError("zero field needs a manifold")
        return zero_field(manifold)
    raise ConfigError(f"unknown field name {name!r}")


def _point(manifold: Manifold, value, key):
    p = manifold.project(array(value))
    try:
        return manifold.check_point(p)
    except RiemstabError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def validate(raw: dict) -> ExperimentConfig:
    _check_keys(raw, SCHEMA)
    kind = raw.get("experiment")
    if kind not in KINDS:
        raise ConfigError(f"experiment must be one of {', '.join(KINDS)}; got {kind!r}")
    for key in REQUIRED[kind]:
        if _get(raw, key) is None:
            raise ConfigError(f"missing required key for {kind}: {key}")
    cfg = ExperimentConfig(kind, raw)
    cfg.seed = int(raw.get("seed", 0))
    cfg.output_dir = raw.get("output_dir")
    try:
        if kind == "isotropy":
            raw.setdefault("manifold", "sphere2")
        if "manifold" in raw:
            try:
                desc: ManifoldDescriptor = parse_descriptor(str(raw["manifold"]))
            except RiemstabError as exc:
                raise ConfigError(str(exc)) from exc
            cfg.manifold = make_manifold(desc)
        if kind == "isotropy":
            cfg.field = killing_rotation_field()
        elif "field" in raw:
            cfg.field = build_field(raw["field"], cfg.manifold)
            if cfg.manifold is None:
                cfg.manifold = cfg.field.manifold
            if type(cfg.field.manifold) is not type(cfg.manifold) or \
                    cfg.field.manifold.shape != cfg.manifold.shape:
                raise ConfigError(f"field {cfg.field.name} lives on {cfg.field.manifold.descriptor}, "
                                  f"not on {cfg.manifold.descriptor}")
        if "methods" in raw:
            cfg.methods = [Method.parse(str(m)) for m in raw["methods"]]
            if not cfg.methods:
                raise ConfigError("methods list is empty")
        if kind == "isotropy":
            cfg.methods = [Method("LIE_EULER_IMPLICIT", number(c)) for c in raw["c_values"]]
        pts = raw.get("points", {})
        if "x0" in pts:
            cfg.x0 = _point(cfg.manifold, pts["x0"], "points.x0")
        if "y0" in pts:
            cfg.y0 = _point(cfg.manifold, pts["y0"], "points.y0")
        if "h" in raw:
            cfg.h_grid = h_grid_from(raw["h"])
            if kind != "global-error":
                cfg.h_grid = sorted(cfg.h_grid)
        s = raw.get("solver", {})
        cfg.solver = SolverConfig(
            tolerance=number(s.get("tolerance", DEFAULTS["solver.tolerance"])),
            max_iterations=int(s.get("max_iterations", DEFAULTS["solver.max_iterations"])),
            strategy=s.get("strategy", DEFAULTS["solver.strategy"]),
            predictor=s.get("predictor", DEFAULTS["solver.predictor"]),
        )
    except ConfigError:
        raise
    except RiemstabError as exc:
        raise ConfigError(str(exc)) from exc
    if kind == "sweep" and cfg.manifold.dist(cfg.x0, cfg.y0) <= POINT_TOL:
        raise ConfigError("points.x0 and points.y0 must differ")
    if kind == "bifurcation" and abs(number(raw["z0"])) > 1:
        raise ConfigError("z0 must lie in [-1, 1]")
    if kind == "global-error":
        t_star = number(raw["t_star"])
        for h in cfg.h_grid:
            k = round(t_star / h)
            if k < 1 or abs(k * h - t_star) > 1e-12 * max(1.0, t_star):
                raise ConfigError(f"t_star={t_star:g} is not an integer multiple of h={h:g}")
    return cfg


def load_config(path, overrides=()) -> ExperimentConfig:
    return validate(load_raw(path, overrides))


def fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


def bundled_fixtures() -> dict[str, Path]:
    return {p.stem: p for p in sorted(fixtures_dir().glob("*.toml"))}
