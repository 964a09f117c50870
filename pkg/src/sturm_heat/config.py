"""Run configuration: YAML schema, validation and the expression grammar.

Expressions are parsed with :mod:`ast` and evaluated by a small whitelist
interpreter (numbers, ``x``/``t``, ``pi``, ``+ - * / **``, ``sin``, ``cos``,
``exp``, ``step``).  Singular terms ``delta(x0[, mass])`` and ``dL2(expr)``
may appear as additive terms, optionally scaled by a constant.
"""

from __future__ import annotations

import ast
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np
import yaml

from .regularization import (
    BUMP,
    DeltaAt,
    DerivativeOfL2,
    DistributionSpec,
    Mollifier,
    Smooth,
    SpecSum,
    geometric_net,
)

EXPERIMENTS = ("solve", "estimates", "existence", "uniqueness", "consistency")
KERNELS = ("bump", "gaussian")
FORMATS = ("json", "csv", "both")
SPATIAL_RANGE = (101, 100001)


class ConfigError(ValueError):
    """Invalid configuration document."""


# --------------------------------------------------------------------------
# expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class _Compiler:
    """Turns a whitelisted AST into a numpy callable of the named variables."""

    def __init__(self, variables: tuple[str, ...], source: str):
        self.variables = variables
        self.source = source
        self.breakpoints: list[float] = []

    def fail(self, msg: str):
        raise ConfigError(f"in expression {self.source!r}: {msg}")

    def constant(self, node) -> float:
        func = self.compile(node)
        if self.uses_variables(node):
            self.fail("expected a constant")
        return float(func(**{v: 0.0 for v in self.variables}))

    def uses_variables(self, node) -> bool:
        return any(isinstance(n, ast.Name) and n.id in self.variables for n in ast.walk(node))

    def compile(self, node) -> Callable:
        if isinstance(node, ast.Expression):
            return self.compile(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            val = float(node.value)
            return lambda **env: val
        if isinstance(node, ast.Name):
            if node.id in self.variables:
                name = node.id
                return lambda **env: env[name]
            if node.id in _CONSTS:
                val = _CONSTS[node.id]
                return lambda **env: val
            self.fail(f"unknown name {node.id!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = self.compile(node.left), self.compile(node.right)
            return lambda **env: op(left(**env), right(**env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self.compile(node.operand)
            sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return lambda **env: sign * inner(**env)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            name = node.func.id
            if name in _FUNCS and len(node.args) == 1:
                fn, arg = _FUNCS[name], self.compile(node.args[0])
                return lambda **env: fn(arg(**env))
            if name == "step" and len(node.args) == 1 and len(self.variables) == 1:
                x0 = self.constant(node.args[0])
                self.breakpoints.append(x0)
                var = self.variables[0]
                return lambda **env: np.where(np.asarray(env[var]) >= x0, 1.0, 0.0)
            if name in ("delta", "dL2"):
                self.fail(f"{name}(...) may only appear as an additive term")
            self.fail(f"unsupported call {name}(...)")
        self.fail(f"unsupported syntax {type(node).__name__}")


def _additive_terms(node, sign=1.0):
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub)):
        yield from _additive_terms(node.left, sign)
        yield from _additive_terms(node.right, sign if isinstance(node.op, ast.Add) else -sign)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        yield from _additive_terms(node.operand, -sign)
    else:
        yield sign, node


def _singular_call(node):
    """Return (scale node or None, call) when node is [c *] delta/dL2(...) [* c]."""
    def is_sing(n):
        return isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id in ("delta", "dL2")
    if is_sing(node):
        return None, node
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
        if is_sing(node.right):
            return node.left, node.right
        if is_sing(node.left):
            return node.right, node.left
    return None


def parse_expression(text, variable: str = "x", domain: tuple[float, float] = (0.0, 1.0),
                     closed: bool = False) -> DistributionSpec:
    """Parse a coefficient expression in one variable into a DistributionSpec.

    ``domain`` bounds delta locations (open interval unless ``closed``).
    """
    source = str(text)
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
    comp = _Compiler((variable,), source)
    smooth_nodes, parts = [], []
    for sign, term in _additive_terms(tree.body):
        sing = _singular_call(term)
        if sing is None:
            smooth_nodes.append((sign, term))
            continue
        scale_node, call = sing
        scale = sign * (comp.constant(scale_node) if scale_node is not None else 1.0)
        if call.func.id == "delta":
            if not 1 <= len(call.args) <= 2 or call.keywords:
                comp.fail("delta takes (location[, mass])")
            loc = comp.constant(call.args[0])
            mass = comp.constant(call.args[1]) if len(call.args) == 2 else 1.0
            lo, hi = domain
            inside = lo <= loc <= hi if closed else lo < loc < hi
            if not inside:
                bracket = f"[{lo:g}, {hi:g}]" if closed else f"({lo:g}, {hi:g})"
                comp.fail(f"delta location {loc:g} outside the admissible interval {bracket}")
            parts.append(DeltaAt(loc, scale * mass))
        else:
            if len(call.args) != 1:
                comp.fail("dL2 takes one argument")
            inner = _Compiler((variable,), source)
            fn = inner.compile(call.args[0])
            parts.append(DerivativeOfL2(_unary(fn, variable, scale), ast.unparse(call.args[0]),
                                        tuple(inner.breakpoints)))
    if smooth_nodes:
        fns = [(s, comp.compile(n)) for s, n in smooth_nodes]

        def smooth(x, fns=fns, var=variable):
            x = np.asarray(x, dtype=float)
            total = np.zeros(x.shape)
            for s, fn in fns:
                total = total + s * np.asarray(fn(**{var: x}), dtype=float)
            return total
        label = ast.unparse(_rebuild(smooth_nodes))
        parts.insert(0, Smooth(smooth, label, tuple(comp.breakpoints)))
    if not parts:
        raise ConfigError(f"empty expression {source!r}")
    if len(parts) == 1:
        return parts[0]
    return SpecSum(tuple(parts), source)


def _unary(fn, var, scale):
    def f(x):
        return scale * np.asarray(fn(**{var: np.asarray(x, dtype=float)}), dtype=float)
    return f


def _rebuild(signed):
    expr = None
    for sign, node in signed:
        if expr is None:
            expr = node if sign > 0 else ast.UnaryOp(ast.USub(), node)
        else:
            expr = ast.BinOp(expr, ast.Add() if sign > 0 else ast.Sub(), node)
    return expr


def parse_source(text) -> Callable[[float, np.ndarray], np.ndarray]:
    """Smooth source term f(t, x)."""
    source = str(text)
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
    fn = _Compiler(("t", "x"), source).compile(tree)

    def f(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(t=float(t), x=x), dtype=float), x.shape)
    return f


# --------------------------------------------------------------------------
# schema

@dataclass(frozen=True)
class NumericsConfig:
    spatial_points: int = 2001
    time_points: int = 2001
    n_max: int = 40
    bracket_width: float = 1.0
    a_floor: float = 1.0
    max_spatial_points: int = 20001
    ratio_ceiling: float = 100.0
    output_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class RegularizationConfig:
    kernels: tuple[str, ...] = ("bump",)
    epsilon: float = 2.0 ** -6
    epsilon_net: tuple[float, ...] = tuple(float(e) for e in geometric_net(3, 10))
    gaussian_sigma: float = 1.0 / 3.0
    u0_extension: str = "odd"


@dataclass(frozen=True)
class OutputConfig:
    path: str = "sturm-heat-out"
    format: str = "both"


@dataclass(frozen=True)
class RunConfig:
    q: str
    a: str
    u0: str
    experiment: str
    f: str | None = None
    T: float = 1.0
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def mollifiers(self) -> list[Mollifier]:
        return [Mollifier(k, self.regularization.gaussian_sigma) if k == "gaussian" else BUMP
                for k in self.regularization.kernels]

    def q_spec(self) -> DistributionSpec:
        return parse_expression(self.q, "x")

    def u0_spec(self) -> DistributionSpec:
        return parse_expression(self.u0, "x")

    def a_spec(self) -> DistributionSpec:
        return parse_expression(self.a, "t", (0.0, self.T), closed=True)

    def f_func(self):
        return None if self.f is None else parse_source(self.f)

    def output_times(self) -> tuple[float, ...]:
        if self.numerics.output_times:
            return self.numerics.output_times
        return tuple(self.T * k / 4 for k in range(5))


_SECTIONS = {"numerics": NumericsConfig, "regularization": RegularizationConfig, "output": OutputConfig}
_TOP = ("q", "a", "u0", "f", "T", "experiment")


def _coerce(cls, name, value, where):
    target = {f.name: f for f in fields(cls)}[name].type
    try:
        if target in ("int",):
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if target in ("float",):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if target in ("str",):
            if not isinstance(value, str):
                raise ValueError
            return value
        if target.startswith("tuple"):
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                value = [value]
            inner = str if "str" in target else float
            return tuple(inner(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{name}: cannot interpret {value!r} as {target}") from None
    return value


def _section(cls, raw, where):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(f"{where}.{k}" for k in unknown))
    if cls is RegularizationConfig and isinstance(raw.get("epsilon_net"), dict):
        net = raw["epsilon_net"]
        extra = sorted(set(net) - {"k_first", "k_last"})
        if extra:
            raise ConfigError("unknown keys: " + ", ".join(f"{where}.epsilon_net.{k}" for k in extra))
        raw = dict(raw, epsilon_net=list(geometric_net(int(net.get("k_first", 3)),
                                                       int(net.get("k_last", 10)))))
    return cls(**{k: _coerce(cls, k, v, where) for k, v in raw.items()})


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(raw) - set(_TOP) - set(_SECTIONS))
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(unknown))
    missing = [k for k in ("q", "a", "u0", "experiment") if k not in raw]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    top = {}
    for key in ("q", "a", "u0", "f"):
        if key in raw and raw[key] is not None:
            top[key] = str(raw[key])
    try:
        T = float(raw.get("T", 1.0))
    except (TypeError, ValueError):
        raise ConfigError(f"T: cannot interpret {raw.get('T')!r} as a number") from None
    cfg = RunConfig(
        q=top["q"], a=top["a"], u0=top["u0"], f=top.get("f"), T=T,
        experiment=str(raw["experiment"]),
        numerics=_section(NumericsConfig, raw.get("numerics"), "numerics"),
        regularization=_section(RegularizationConfig, raw.get("regularization"), "regularization"),
        output=_section(OutputConfig, raw.get("output"), "output"),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}")
    if not cfg.T > 0:
        raise ConfigError("T must be positive")
    n = cfg.numerics
    lo, hi = SPATIAL_RANGE
    if not lo <= n.spatial_points <= hi:
        raise ConfigError(f"numerics.spatial_points={n.spatial_points} outside [{lo}, {hi}]")
    if not lo <= n.max_spatial_points <= hi:
        raise ConfigError(f"numerics.max_spatial_points={n.max_spatial_points} outside [{lo}, {hi}]")
    if n.time_points < 3:
        raise ConfigError("numerics.time_points must be at least 3")
    if n.n_max < 1:
        raise ConfigError("numerics.n_max must be at least 1")
    if n.n_max * 10 > n.max_spatial_points:
        raise ConfigError("numerics.n_max too large for numerics.max_spatial_points")
    if not n.a_floor > 0 or not n.bracket_width > 0 or not n.ratio_ceiling > 0:
        raise ConfigError("numerics.a_floor, bracket_width and ratio_ceiling must be positive")
    if any(not 0 <= t <= cfg.T for t in n.output_times):
        raise ConfigError(f"numerics.output_times must lie in [0, {cfg.T:g}]")
    r = cfg.regularization
    bad = [k for k in r.kernels if k not in KERNELS]
    if bad or not r.kernels:
        raise ConfigError(f"regularization.kernels must be drawn from {', '.join(KERNELS)}")
    if cfg.experiment == "uniqueness" and len(r.kernels) != 2:
        raise ConfigError("uniqueness requires two regularization choices")
    if not 0 < r.epsilon <= 1:
        raise ConfigError("regularization.epsilon must lie in (0, 1]")
    net = r.epsilon_net
    if not net or any(not 0 < e <= 1 for e in net) or any(b >= a for a, b in zip(net, net[1:])):
        raise ConfigError("regularization.epsilon_net must be strictly decreasing values in (0, 1]")
    if not 0 < r.gaussian_sigma <= 1:
        raise ConfigError("regularization.gaussian_sigma must lie in (0, 1]")
    if r.u0_extension not in ("zero", "odd"):
        raise ConfigError("regularization.u0_extension must be 'zero' or 'odd'")
    if cfg.output.format not in FORMATS:
        raise ConfigError(f"output.format must be one of {', '.join(FORMATS)}")
    # parse every expression now so errors surface as config errors
    cfg.q_spec()
    cfg.u0_spec()
    cfg.a_spec()
    cfg.f_func()


def serialize(cfg: RunConfig) -> str:
    """YAML text that parses back to an equal RunConfig."""
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v
    doc = {"q": cfg.q, "a": cfg.a, "u0": cfg.u0}
    if cfg.f is not None:
        doc["f"] = cfg.f
    doc["T"] = cfg.T
    doc["experiment"] = cfg.experiment
    for name in _SECTIONS:
        doc[name] = plain(asdict(getattr(cfg, name)))
    return yaml.safe_dump(doc, sort_keys=False)


def as_dict(cfg: RunConfig) -> dict:
    return yaml.safe_load(serialize(cfg))
