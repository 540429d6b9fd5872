"""
YAML run configuration.

A file is validated in full before anything is computed: unknown keys,
wrong types and out-of-range values are reported as ``ConfigError`` with the
1-based line of the offending node.  ``RunConfig.to_yaml`` re-serializes a
loaded config so that loading the output gives an equal object.

Layout::

    plant: benchmark
    realizations: [forward, nominal, static]
    x0: [9, 9, 9]
    xstar: [0, 0, 0]
    horizon: 5.0
    seed: 0
    log_stride: 50
    controller: {alpha_bar: 200, beta_bar: 50, tau: 0.5, N: 4, tau_s: 0.001}
    disturbance: {kind: constant, vector: [2, 0, 0]}
    geodesic: {x_from: [0, 0, 0], x_to: [9, 9, 9], N: 4, metric: benchmark}
    verify: {samples: 1000, box: [-10, 10], u_box: [-30, 30], tol: 0.01}
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .pathdyn import ConfigError as _BaseConfigError
from .pathdyn import ControllerConfig, Realization
from .plant import PLANTS, DisturbanceModel

__all__ = [
    "ConfigError",
    "GeodesicSection",
    "VerifySection",
    "RunConfig",
    "load_config",
    "parse_config",
]

METRICS = ("benchmark", "euclidean")


class ConfigError(_BaseConfigError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class GeodesicSection:
    x_from: tuple
    x_to: tuple
    N: int = 4
    max_iter: int = 500
    gtol: float = 1e-8
    metric: str = "benchmark"


@dataclass(frozen=True)
class VerifySection:
    samples: int = 1000
    box: tuple = (-10.0, 10.0)
    u_box: tuple = (-30.0, 30.0)
    tol: float = 1e-2
    seed: int = 0
    lam: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    x0: tuple
    plant: str = "benchmark"
    realizations: tuple = ("nominal",)
    xstar: Optional[tuple] = None
    ustar: Optional[tuple] = None
    horizon: float = 5.0
    seed: int = 0
    log_stride: int = 50
    output: Optional[str] = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    geodesic: Optional[GeodesicSection] = None
    verify: VerifySection = field(default_factory=VerifySection)
    name: str = "run"

    def __post_init__(self):
        if self.xstar is None:
            object.__setattr__(self, "xstar", tuple(0.0 for _ in self.x0))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "plant": self.plant,
            "realizations": [Realization.parse(r).value for r in self.realizations],
            "x0": list(self.x0),
            "xstar": list(self.xstar),
            "horizon": self.horizon,
            "seed": self.seed,
            "log_stride": self.log_stride,
        }
        if self.ustar is not None:
            out["ustar"] = list(self.ustar)
        if self.output is not None:
            out["output"] = self.output
        out["controller"] = dataclasses.asdict(self.controller)
        d = self.disturbance
        dist: dict[str, Any] = {"kind": d.kind}
        if d.vector is not None:
            dist["vector"] = list(d.vector)
        if d.kind != "none":
            dist["bound"] = d.bound
        if d.kind == "random":
            dist["hold"] = d.hold
        out["disturbance"] = dist
        if self.geodesic is not None:
            g = dataclasses.asdict(self.geodesic)
            g["x_from"], g["x_to"] = list(g["x_from"]), list(g["x_to"])
            out["geodesic"] = g
        v = dataclasses.asdict(self.verify)
        v["box"], v["u_box"] = list(v["box"]), list(v["u_box"])
        if v["lam"] is None:
            del v["lam"]
        out["verify"] = v
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


# --- schema -----------------------------------------------------------------
# Each leaf checker receives (value, node, ctx) and returns the converted value.


class _Ctx:
    def __init__(self, source):
        self.source = source

    def fail(self, node, msg):
        line = node.start_mark.line + 1 if node is not None else None
        raise ConfigError(msg, line, self.source)


def _number(v, node, ctx, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(node, f"{name}: expected a number, got {type(v).__name__}")
    if not math.isfinite(v):
        ctx.fail(node, f"{name}: must be finite")
    return float(v)


def _positive(v, node, ctx, name):
    v = _number(v, node, ctx, name)
    if v <= 0:
        ctx.fail(node, f"{name}: must be positive")
    return v


def _nonneg(v, node, ctx, name):
    v = _number(v, node, ctx, name)
    if v < 0:
        ctx.fail(node, f"{name}: must be nonnegative")
    return v


def _integer(v, node, ctx, name, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        ctx.fail(node, f"{name}: expected an integer, got {type(v).__name__}")
    if lo is not None and v < lo:
        ctx.fail(node, f"{name}: must be >= {lo}")
    return v


def _string(v, node, ctx, name, choices=None):
    if not isinstance(v, str):
        ctx.fail(node, f"{name}: expected a string")
    if choices is not None and v not in choices:
        ctx.fail(node, f"{name}: {v!r} is not one of {sorted(choices)}")
    return v


def _vector(v, node, ctx, name, length=None):
    if not isinstance(v, list):
        ctx.fail(node, f"{name}: expected a list of numbers")
    items = node.value if isinstance(node, yaml.SequenceNode) else [node] * len(v)
    out = tuple(_number(x, n, ctx, f"{name}[{i}]") for i, (x, n) in enumerate(zip(v, items)))
    if length is not None and len(out) != length:
        ctx.fail(node, f"{name}: expected {length} entries, got {len(out)}")
    return out


def _interval(v, node, ctx, name):
    lo, hi = _vector(v, node, ctx, name, 2)
    if not lo < hi:
        ctx.fail(node, f"{name}: lower bound must be below upper bound")
    return (lo, hi)


def _realizations(v, node, ctx, name):
    if isinstance(v, str):
        v, items = [v], [node]
    elif isinstance(v, list) and v:
        items = node.value
    else:
        ctx.fail(node, f"{name}: expected a realization name or a non-empty list")
    out = []
    for x, n in zip(v, items):
        try:
            out.append(Realization.parse(x).value)
        except (ValueError, TypeError):
            ctx.fail(n, f"{name}: unknown realization {x!r}")
    return tuple(out)


def _children(node, data, ctx, name, allowed):
    """Map key -> (value, value node); rejects unknown and duplicate keys."""
    if not isinstance(node, yaml.MappingNode) or not isinstance(data, dict):
        ctx.fail(node, f"{name or 'config'}: expected a mapping")
    out = {}
    for knode, vnode in node.value:
        key = knode.value
        if key not in allowed:
            full = f"{name}.{key}" if name else key
            ctx.fail(knode, f"unknown key {full!r}; allowed: {', '.join(allowed)}")
        if key in out:
            ctx.fail(knode, f"duplicate key {key!r}")
        out[key] = (data[key], vnode)
    return out


_CONTROLLER = {
    "alpha_bar": _nonneg,
    "beta_bar": _nonneg,
    "tau": _number,
    "epsilon": _positive,
    "N": lambda v, n, c, k: _integer(v, n, c, k, lo=2),
    "tau_s": _positive,
    "eta_mode": lambda v, n, c, k: _string(v, n, c, k, ("fixed", "adaptive")),
    "zeta": lambda v, n, c, k: _string(v, n, c, k, ("linear", "smoothstep")),
    "integrator": lambda v, n, c, k: _string(v, n, c, k, ("rk4", "euler")),
    "static_max_iter": lambda v, n, c, k: _integer(v, n, c, k, lo=1),
}

_DISTURBANCE = {
    "kind": lambda v, n, c, k: _string(v, n, c, k, ("none", "constant", "random")),
    "vector": _vector,
    "bound": _nonneg,
    "hold": _positive,
}

_GEODESIC = {
    "x_from": _vector,
    "x_to": _vector,
    "N": lambda v, n, c, k: _integer(v, n, c, k, lo=2),
    "max_iter": lambda v, n, c, k: _integer(v, n, c, k, lo=0),
    "gtol": _positive,
    "metric": lambda v, n, c, k: _string(v, n, c, k, METRICS),
}

_VERIFY = {
    "samples": lambda v, n, c, k: _integer(v, n, c, k, lo=1),
    "box": _interval,
    "u_box": _interval,
    "tol": _nonneg,
    "seed": lambda v, n, c, k: _integer(v, n, c, k, lo=0),
    "lam": _positive,
}

_TOP = {
    "name": _string,
    "plant": lambda v, n, c, k: _string(v, n, c, k, tuple(PLANTS)),
    "realizations": _realizations,
    "x0": _vector,
    "xstar": _vector,
    "ustar": _vector,
    "horizon": _positive,
    "seed": lambda v, n, c, k: _integer(v, n, c, k, lo=0),
    "log_stride": lambda v, n, c, k: _integer(v, n, c, k, lo=1),
    "output": _string,
    "controller": None,
    "disturbance": None,
    "geodesic": None,
    "verify": None,
}


def _section(items, ctx, name, schema):
    out = {}
    for key, (v, vnode) in items.items():
        out[key] = schema[key](v, vnode, ctx, f"{name}.{key}" if name else key)
    return out


def _build(node, data, ctx) -> RunConfig:
    top = _children(node, data, ctx, "", tuple(_TOP))
    kw = _section({k: v for k, v in top.items() if _TOP[k] is not None}, ctx, "", _TOP)
    if "x0" not in kw:
        ctx.fail(node, "missing required key 'x0'")
    n = len(kw["x0"])
    for key in ("xstar",):
        if key in kw and len(kw[key]) != n:
            ctx.fail(top[key][1], f"{key}: expected {n} entries to match x0")

    if "controller" in top:
        v, vnode = top["controller"]
        raw = _section(_children(vnode, v, ctx, "controller", tuple(_CONTROLLER)),
                       ctx, "controller", _CONTROLLER)
        try:
            kw["controller"] = ControllerConfig(**raw)
        except _BaseConfigError as exc:
            ctx.fail(vnode, f"controller: {exc}")

    if "disturbance" in top:
        v, vnode = top["disturbance"]
        raw = _section(_children(vnode, v, ctx, "disturbance", tuple(_DISTURBANCE)),
                       ctx, "disturbance", _DISTURBANCE)
        if "vector" in raw and len(raw["vector"]) != n:
            ctx.fail(vnode, f"disturbance.vector: expected {n} entries to match x0")
        try:
            kw["disturbance"] = DisturbanceModel(**raw)
        except ValueError as exc:
            ctx.fail(vnode, f"disturbance: {exc}")

    if "geodesic" in top:
        v, vnode = top["geodesic"]
        items = _children(vnode, v, ctx, "geodesic", tuple(_GEODESIC))
        raw = _section(items, ctx, "geodesic", _GEODESIC)
        for req in ("x_from", "x_to"):
            if req not in raw:
                ctx.fail(vnode, f"geodesic: missing required key {req!r}")
        if len(raw["x_from"]) != len(raw["x_to"]):
            ctx.fail(vnode, "geodesic: x_from and x_to differ in length")
        kw["geodesic"] = GeodesicSection(**raw)

    if "verify" in top:
        v, vnode = top["verify"]
        raw = _section(_children(vnode, v, ctx, "verify", tuple(_VERIFY)),
                       ctx, "verify", _VERIFY)
        kw["verify"] = VerifySection(**raw)
    return RunConfig(**kw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    ctx = _Ctx(source)
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise ConfigError("empty configuration", None, source)
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line, source) from None
    finally:
        loader.dispose()
    return _build(node, data, ctx)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
