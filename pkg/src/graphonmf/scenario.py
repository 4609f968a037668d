"""Scenario files: TOML declarations of graphon, dynamics, initial law and run sizes.

Schema (version 1)::

    schema_version = 1
    name = "constant_linear"

    [graphon]            # kind = constant | power_law | stochastic_block | grid
    kind = "constant"
    c = 1.0

    [dynamics]
    dim_state = 1        # dim_noise defaults to dim_state
    drift = {kind = "linear_mean_reversion", rate = 1.0}
    diffusion = {kind = "constant", scale = 0.5}

    [initial]            # kind = point | gaussian | block_constant
    kind = "gaussian"
    mean = [0.0]
    std = 1.0

    [simulation]
    horizon = 1.0
    dt = 1e-3
    replicas = 16
    seed = 0

    [experiment]
    n_list = [50, 100, 200, 400, 800]
    grid_size = 32
    ensemble = 2000

All problems found in a file are reported together in one :class:`SchemaError`
with the line of the offending key.
"""
from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .dynamics import (DIFFUSION_KERNELS, DIFFUSION_MOMENTS, DRIFT_KERNELS, DRIFT_MOMENTS,
                       ConstantDiffusion, DynamicsModel, LinearMeanReversion, MomentFunctional,
                       ReflectionGap, ScalarKernel, Zero)
from .errors import SchemaError
from .graphon import Constant, PowerLaw, StepGraphon, StochasticBlock
from .initial import BlockConstant, DiracLaw, DiscreteLaw, GaussianFamily, GaussianLaw, Point
from .particles import SimulationConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

DEFAULTS = {
    "horizon": 1.0,
    "dt": 1e-3,
    "replicas": 16,
    "seed": 0,
    "n_list": [50, 100, 200, 400, 800],
    "grid_size": 32,
    "ensemble": 2000,
    "tol": 1e-3,
    "max_iter": 25,
    "secondary_labels": 32,
    "secondary_times": 8,
    "secondary_members": 64,
    "subsample": 256,
    "surrogate_members": 64,
    "lipschitz_trials": 200,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    graphon: object
    model: DynamicsModel
    initial: object
    config: SimulationConfig
    n_list: tuple = tuple(DEFAULTS["n_list"])
    grid_size: int = DEFAULTS["grid_size"]
    ensemble: int = DEFAULTS["ensemble"]
    tol: float = DEFAULTS["tol"]
    max_iter: int = DEFAULTS["max_iter"]
    secondary_labels: int = DEFAULTS["secondary_labels"]
    secondary_times: int = DEFAULTS["secondary_times"]
    secondary_members: int = DEFAULTS["secondary_members"]
    subsample: int = DEFAULTS["subsample"]
    surrogate_members: int = DEFAULTS["surrogate_members"]
    lipschitz_trials: int = DEFAULTS["lipschitz_trials"]
    antithetic: bool = False
    source: str = ""
    data: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.config.master_seed

    def with_overrides(self, seed=None, replicas=None, n_list=None, **kw):
        cfg = self.config
        if seed is not None:
            cfg = replace(cfg, master_seed=int(seed))
        if replicas is not None:
            cfg = replace(cfg, replicas=int(replicas))
        out = replace(self, config=cfg, **kw)
        if n_list is not None:
            out = replace(out, n_list=tuple(int(n) for n in n_list))
        return out

    def describe(self):
        return {
            "name": self.name,
            "graphon": self.graphon.describe(),
            "dynamics": self.model.describe(),
            "initial": self.initial.describe(),
            "simulation": {"horizon": self.config.horizon, "dt": self.config.dt,
                           "replicas": self.config.replicas, "seed": self.config.master_seed},
            "experiment": {"n_list": list(self.n_list), "grid_size": self.grid_size,
                           "ensemble": self.ensemble, "tol": self.tol,
                           "max_iter": self.max_iter, "antithetic": self.antithetic},
        }


def _locate(text, path):
    """Best-effort line number of dotted key ``path`` in TOML ``text``."""
    if not text:
        return None
    parts = path.split(".")
    table = []
    best = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\[?\s*([^\]]+?)\s*\]\]?$", line)
        if m:
            table = [p.strip() for p in m.group(1).split(".")]
            if table == parts:
                return no
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
        if not m:
            continue
        full = table + [m.group(1)]
        if full == parts:
            return no
        # inline table or array holding the key
        if parts[: len(full)] == full and best is None:
            best = no
    if best is None and len(parts) > 1:
        return _locate(text, ".".join(parts[:-1]))
    return best


class _Collector:
    def __init__(self, text):
        self.text = text
        self.errors = []

    def add(self, path, msg):
        self.errors.append((_locate(self.text, path), f"{path}: {msg}"))

    def table(self, data, path, required=True):
        val = data.get(path.split(".")[-1])
        if val is None:
            if required:
                self.add(path, "missing required table")
            return None
        if not isinstance(val, dict):
            self.add(path, "must be a table")
            return None
        return val

    def number(self, tbl, path, default=None, lo=None, hi=None, lo_open=False, integer=False,
               required=False):
        key = path.split(".")[-1]
        if tbl is None or key not in tbl:
            if required:
                self.add(path, "missing required value")
            return default
        v = tbl[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(path, f"must be a number, got {v!r}")
            return default
        if integer and not isinstance(v, int):
            self.add(path, f"must be an integer, got {v!r}")
            return default
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.add(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
            return default
        if hi is not None and v > hi:
            self.add(path, f"must be <= {hi}, got {v}")
            return default
        return v

    def vector(self, tbl, path, default=None, required=False):
        key = path.split(".")[-1]
        if tbl is None or key not in tbl:
            if required:
                self.add(path, "missing required value")
            return default
        v = tbl[key]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return (float(v),)
        if (isinstance(v, list) and v
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            return tuple(float(x) for x in v)
        self.add(path, f"must be a number or a non-empty list of numbers, got {v!r}")
        return default

    def unknown(self, tbl, path, allowed):
        if tbl is None:
            return
        for k in tbl:
            if k not in allowed:
                self.add(f"{path}.{k}" if path else k,
                         f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _kind(c, tbl, path, registry):
    if tbl is None:
        return None
    kind = tbl.get("kind")
    if kind is None:
        c.add(f"{path}.kind", "missing required value")
        return None
    if kind not in registry:
        c.add(f"{path}.kind", f"unknown kind {kind!r} (known: {', '.join(sorted(registry))})")
        return None
    return kind


GRAPHON_KEYS = {"constant": {"c"}, "power_law": {"p"},
                "stochastic_block": {"boundaries", "block_matrix"}, "grid": {"path"}}


def _graphon(c, tbl, base_dir):
    kind = _kind(c, tbl, "graphon", GRAPHON_KEYS)
    if kind is None:
        return None
    c.unknown(tbl, "graphon", GRAPHON_KEYS[kind] | {"kind"})
    try:
        if kind == "constant":
            return Constant(float(c.number(tbl, "graphon.c", 1.0, 0.0, 1.0)))
        if kind == "power_law":
            p = c.number(tbl, "graphon.p", required=True, lo=0.0)
            if p is not None and p >= 1:
                c.add("graphon.p", f"must be < 1, got {p}")
                return None
            return PowerLaw(float(p)) if p is not None else None
        if kind == "stochastic_block":
            b = c.vector(tbl, "graphon.boundaries", required=True)
            mat = tbl.get("block_matrix")
            if mat is None:
                c.add("graphon.block_matrix", "missing required value")
                return None
            return StochasticBlock(b, mat) if b is not None else None
        path = tbl.get("path")
        if not isinstance(path, str):
            c.add("graphon.path", "grid graphons need a CSV path string")
            return None
        p = Path(path)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.exists():
            c.add("graphon.path", f"file not found: {p}")
            return None
        return StepGraphon.from_csv(p)
    except (ValueError, TypeError) as exc:
        c.add("graphon", str(exc))
        return None


DRIFT_KEYS = {"zero": set(), "linear_mean_reversion": {"rate"},
              "scalar_kernel": {"kernel", "scale"}, "moment_functional": {"function", "scale"},
              "reflection_gap": {"rate", "strength"}}
DIFFUSION_KEYS = {"zero": set(), "constant": {"scale"}, "scalar_kernel": {"kernel", "scale"},
                  "moment_functional": {"function", "scale"}}


def _named(c, tbl, path, key, table):
    name = tbl.get(key)
    if name not in table:
        c.add(f"{path}.{key}", f"unknown {key} {name!r} (known: {', '.join(sorted(table))})")
        return None
    return name


def _coefficient(c, tbl, path, role):
    keys = DRIFT_KEYS if role == "drift" else DIFFUSION_KEYS
    kind = _kind(c, tbl, path, keys)
    if kind is None:
        return None
    c.unknown(tbl, path, keys[kind] | {"kind"})
    scale = c.number(tbl, f"{path}.scale", 1.0)
    if kind == "zero":
        return Zero()
    if kind == "linear_mean_reversion":
        return LinearMeanReversion(float(c.number(tbl, f"{path}.rate", 1.0)))
    if kind == "reflection_gap":
        return ReflectionGap(float(c.number(tbl, f"{path}.rate", 1.0)),
                             float(c.number(tbl, f"{path}.strength", 0.5)))
    if kind == "constant":
        return ConstantDiffusion(float(scale))
    if kind == "scalar_kernel":
        name = _named(c, tbl, path, "kernel",
                      DRIFT_KERNELS if role == "drift" else DIFFUSION_KERNELS)
        return ScalarKernel(name, float(scale), role) if name else None
    name = _named(c, tbl, path, "function", DRIFT_MOMENTS if role == "drift" else DIFFUSION_MOMENTS)
    return MomentFunctional(name, float(scale), role) if name else None


def _model(c, tbl):
    if tbl is None:
        return None
    c.unknown(tbl, "dynamics", {"dim_state", "dim_noise", "declared_lipschitz", "drift",
                                "diffusion"})
    d = c.number(tbl, "dynamics.dim_state", 1, lo=1, integer=True)
    n = c.number(tbl, "dynamics.dim_noise", d, lo=1, integer=True)
    K = c.number(tbl, "dynamics.declared_lipschitz", None, lo=0.0, lo_open=True)
    drift = _coefficient(c, c.table(tbl, "dynamics.drift"), "dynamics.drift", "drift")
    diff = _coefficient(c, c.table(tbl, "dynamics.diffusion"), "dynamics.diffusion", "diffusion")
    if drift is None or diff is None:
        return None
    if isinstance(diff, ConstantDiffusion) and n < d:
        c.add("dynamics.dim_noise", "constant diffusion needs dim_noise >= dim_state")
    try:
        return DynamicsModel(drift, diff, int(d), int(n), K)
    except ValueError as exc:
        c.add("dynamics", str(exc))
        return None


LAW_KEYS = {"dirac": {"point"}, "gaussian": {"mean", "std"}, "discrete": {"points", "weights"}}
INITIAL_KEYS = {"point": {"location", "slope"},
                "gaussian": {"mean", "mean_slope", "std", "std_slope"},
                "block_constant": {"boundaries", "laws"}}


def _law(c, tbl, path):
    kind = _kind(c, tbl, path, LAW_KEYS)
    if kind is None:
        return None
    c.unknown(tbl, path, LAW_KEYS[kind] | {"kind"})
    if kind == "dirac":
        p = c.vector(tbl, f"{path}.point", required=True)
        return DiracLaw(p) if p else None
    if kind == "gaussian":
        m = c.vector(tbl, f"{path}.mean", required=True)
        s = c.number(tbl, f"{path}.std", 1.0, lo=0.0)
        return GaussianLaw(m, float(s)) if m else None
    pts = tbl.get("points")
    if not isinstance(pts, list) or not pts:
        c.add(f"{path}.points", "must be a non-empty list")
        return None
    w = tbl.get("weights")
    try:
        law = DiscreteLaw(tuple(tuple(p) if isinstance(p, list) else p for p in pts),
                          tuple(w) if w is not None else None)
        law.to_measure()
        return law
    except (ValueError, TypeError) as exc:
        c.add(path, str(exc))
        return None


def _initial(c, tbl):
    kind = _kind(c, tbl, "initial", INITIAL_KEYS)
    if kind is None:
        return None
    c.unknown(tbl, "initial", INITIAL_KEYS[kind] | {"kind", "moment_exponent"})
    eps = float(c.number(tbl, "initial.moment_exponent", 2.0, lo=0.0, lo_open=True))
    try:
        if kind == "point":
            return Point(c.vector(tbl, "initial.location", (0.0,)),
                         c.vector(tbl, "initial.slope", (0.0,)), eps)
        if kind == "gaussian":
            return GaussianFamily(c.vector(tbl, "initial.mean", (0.0,)),
                                  c.vector(tbl, "initial.mean_slope", (0.0,)),
                                  float(c.number(tbl, "initial.std", 1.0, lo=0.0)),
                                  float(c.number(tbl, "initial.std_slope", 0.0)), eps)
        b = c.vector(tbl, "initial.boundaries", (0.0, 1.0))
        raw = tbl.get("laws")
        if not isinstance(raw, list) or not raw:
            c.add("initial.laws", "block_constant needs a non-empty list of laws")
            return None
        laws = [_law(c, t if isinstance(t, dict) else None, "initial.laws") for t in raw]
        if any(law is None for law in laws):
            return None
        return BlockConstant(b, tuple(laws), eps)
    except (ValueError, TypeError) as exc:
        c.add("initial", str(exc))
        return None


def parse_scenario_text(text, base_dir=None):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise SchemaError([(int(m.group(1)) if m else None, f"TOML syntax: {exc}")]) from None
    c = _Collector(text)
    c.unknown(data, "", {"schema_version", "name", "graphon", "dynamics", "initial",
                         "simulation", "experiment"})
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        c.add("schema_version", f"unsupported schema version {version!r} "
                                f"(this build reads {SCHEMA_VERSION})")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        c.add("name", "missing or empty scenario name")

    graphon = _graphon(c, c.table(data, "graphon"), base_dir)
    model = _model(c, c.table(data, "dynamics"))
    initial = _initial(c, c.table(data, "initial"))
    if model is not None and initial is not None and initial.dim != model.dim_state:
        c.add("initial", f"initial law has dimension {initial.dim}, "
                         f"dynamics.dim_state is {model.dim_state}")

    sim = c.table(data, "simulation", required=False) or {}
    c.unknown(sim, "simulation", {"horizon", "dt", "replicas", "seed"})
    horizon = c.number(sim, "simulation.horizon", DEFAULTS["horizon"], lo=0.0, lo_open=True)
    dt = c.number(sim, "simulation.dt", DEFAULTS["dt"], lo=0.0, lo_open=True)
    if dt > horizon:
        c.add("simulation.dt", f"must not exceed the horizon {horizon}")
        dt = horizon
    replicas = c.number(sim, "simulation.replicas", DEFAULTS["replicas"], lo=1, integer=True)
    seed = c.number(sim, "simulation.seed", DEFAULTS["seed"], lo=0, hi=2**64 - 1, integer=True)

    exp = c.table(data, "experiment", required=False) or {}
    ints = ("grid_size", "ensemble", "max_iter", "secondary_labels", "secondary_times",
            "secondary_members", "subsample", "surrogate_members", "lipschitz_trials")
    c.unknown(exp, "experiment", set(ints) | {"n_list", "tol", "antithetic"})
    antithetic = exp.get("antithetic", False)
    if not isinstance(antithetic, bool):
        c.add("experiment.antithetic", "must be true or false")
    elif antithetic and isinstance(exp.get("ensemble"), int) and exp["ensemble"] % 2:
        c.add("experiment.ensemble", "antithetic flows need an even ensemble size")
    n_list = exp.get("n_list", DEFAULTS["n_list"])
    if (not isinstance(n_list, list) or not n_list
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in n_list)):
        c.add("experiment.n_list", "must be a non-empty list of positive integers")
        n_list = DEFAULTS["n_list"]
    elif any(b <= a for a, b in zip(n_list, n_list[1:])):
        c.add("experiment.n_list", "n_list must be strictly increasing")
    extra = {k: c.number(exp, f"experiment.{k}", DEFAULTS[k], lo=1, integer=True) for k in ints}
    tol = c.number(exp, "experiment.tol", DEFAULTS["tol"], lo=0.0, lo_open=True)

    if c.errors:
        raise SchemaError(sorted(c.errors, key=lambda e: (e[0] is None, e[0] or 0)))
    config = SimulationConfig(float(horizon), float(dt), int(replicas), int(seed))
    return Scenario(name, graphon, model, initial, config, tuple(n_list), tol=float(tol),
                    antithetic=antithetic is True, source=text, data=copy.deepcopy(data), **extra)


def parse_scenario(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return parse_scenario_text(path.read_text(), base_dir=path.parent)


def builtin_names():
    root = resources.files("graphonmf") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_builtin(name):
    root = resources.files("graphonmf") / "scenarios"
    res = root / f"{name}.toml"
    if not res.is_file():
        raise KeyError(f"no built-in scenario {name!r}; known: {builtin_names()}")
    return parse_scenario_text(res.read_text())


def resolve(spec):
    """Path to a scenario file, or the name of a built-in one."""
    p = Path(spec)
    if p.exists() or spec.endswith(".toml"):
        return parse_scenario(p)
    return load_builtin(spec)
