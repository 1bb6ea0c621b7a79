"""Flat ``key = value`` experiment configuration with ``[section]`` headers.

All violations are collected (with line numbers) before raising.
"""
from __future__ import annotations

import ast
import hashlib
import math
import operator
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .mesh import SIDES, CoefficientSpec
from .profiles import PROFILES
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# ---------------------------------------------------------------------------
# coefficient expressions in x, y

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh}
_CONSTS = {"pi": math.pi, "e": math.e}


def _check_expr(node):
    if isinstance(node, ast.Expression):
        return _check_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return
    if isinstance(node, ast.Name) and node.id in ("x", "y", *_CONSTS):
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check_expr(node.left)
        _check_expr(node.right)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check_expr(node.operand)
        return
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        _check_expr(node.args[0])
        return
    raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    return _FUNCS[node.func.id](_eval(node.args[0], env))


def compile_expression(text: str):
    """Callable of centroid coordinates (m, d) for an arithmetic expression."""
    tree = ast.parse(text.strip(), mode="eval")
    _check_expr(tree)

    def fn(pts):
        env = {"x": pts[:, 0], "y": pts[:, 1] if pts.shape[1] > 1 else np.zeros(len(pts))}
        return np.broadcast_to(np.asarray(_eval(tree, env), dtype=float), (len(pts),))

    return fn


# ---------------------------------------------------------------------------
# schema


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError("expected an integer")
    return int(f)


def _bool(v):
    low = v.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected a boolean")


def _floats(v):
    return tuple(float(p) for p in v.split(",") if p.strip())


def _words(v):
    return tuple(p.strip() for p in v.split(",") if p.strip())


def _str(v):
    return v.strip()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class DomainBlock:
    dimension: int = field(default=1, metadata={"conv": _int})
    resolution: int = field(default=100, metadata={"conv": _int})
    gamma0: tuple = field(default=("left",), metadata={"conv": _words})
    coefficient: str = field(default="identity", metadata={"conv": _str})
    a1: str = field(default="1", metadata={"conv": _str})
    a2: str = field(default="1", metadata={"conv": _str})
    a11: str = field(default="1", metadata={"conv": _str})
    a12: str = field(default="0", metadata={"conv": _str})
    a22: str = field(default="1", metadata={"conv": _str})

    def coefficient_spec(self) -> CoefficientSpec:
        if self.coefficient == "identity":
            return CoefficientSpec("identity")
        if self.coefficient == "diagonal":
            exprs = (self.a1, self.a2)[: self.dimension]
            return CoefficientSpec("diagonal", tuple(compile_expression(e) for e in exprs))
        return CoefficientSpec("full_symmetric",
                               tuple(compile_expression(e) for e in (self.a11, self.a12, self.a22)))


@dataclass(frozen=True)
class OperatorBlock:
    s: float = field(default=0.5, metadata={"conv": _float})
    mass_mode: str = field(default="lumped", metadata={"conv": _str})
    trials: int = field(default=100, metadata={"conv": _int})
    seed: int = field(default=0, metadata={"conv": _int})
    n_shells: int = field(default=4, metadata={"conv": _int})


@dataclass(frozen=True)
class SolverBlock:
    delta: float = field(default=1e-2, metadata={"conv": _float})
    mu: float = field(default=1e-2, metadata={"conv": _float})
    dt: float = field(default=1e-4, metadata={"conv": _float})
    t_end: float = field(default=0.1, metadata={"conv": _float})
    picard_iters: int = field(default=0, metadata={"conv": _int})
    picard_tol: float = field(default=1e-10, metadata={"conv": _float})
    adapt: bool = field(default=False, metadata={"conv": _bool})
    regularize_data: bool = field(default=True, metadata={"conv": _bool})
    initial: str = field(default="sine_compatible", metadata={"conv": _str})


@dataclass(frozen=True)
class SweepBlock:
    delta_grid: tuple = field(default=(1e-2, 5e-3, 2.5e-3, 1.25e-3), metadata={"conv": _floats})
    mu_grid: tuple = field(default=(1e-2, 5e-3, 2.5e-3, 1.25e-3), metadata={"conv": _floats})
    mode: str = field(default="diagonal", metadata={"conv": _str})


@dataclass(frozen=True)
class OutputBlock:
    directory: str = field(default="out", metadata={"conv": _str})
    snapshot_times: tuple = field(default=(), metadata={"conv": _floats})


SECTIONS = {"domain": DomainBlock, "operator": OperatorBlock, "solver": SolverBlock,
            "sweep": SweepBlock, "output": OutputBlock}


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainBlock = DomainBlock()
    operator: OperatorBlock = OperatorBlock()
    solver: SolverBlock = SolverBlock()
    sweep: SweepBlock = SweepBlock()
    output: OutputBlock = OutputBlock()
    defaulted: frozenset = field(default=frozenset(), compare=False)

    def solver_config(self) -> SolverConfig:
        sv = self.solver
        return SolverConfig(s=self.operator.s, delta=sv.delta, mu=sv.mu, dt=sv.dt, t_end=sv.t_end,
                            picard_iters=sv.picard_iters, picard_tol=sv.picard_tol, adapt=sv.adapt,
                            mass_mode=self.operator.mass_mode, regularize_data=sv.regularize_data)

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]


def serialize(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        block = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(block):
            lines.append(f"{f.name} = {_fmt(getattr(block, f.name))}")
        lines.append("")
    return "\n".join(lines)


def _validate(cfg: ExperimentConfig, where) -> list:
    errs = []

    def bad(section, key, msg):
        line = where.get((section, key))
        errs.append(f"line {line}: {section}.{key}: {msg}" if line else f"{section}.{key}: {msg}")

    d, op, sv, sw = cfg.domain, cfg.operator, cfg.solver, cfg.sweep
    if d.dimension not in (1, 2):
        bad("domain", "dimension", "must be 1 or 2")
    if d.resolution < 4:
        bad("domain", "resolution", "must be >= 4")
    if d.dimension in (1, 2):
        if not d.gamma0:
            bad("domain", "gamma0", "Gamma0 empty: need at least one Dirichlet side")
        unknown = set(d.gamma0) - set(SIDES[d.dimension])
        if unknown:
            bad("domain", "gamma0", f"unknown side(s) {sorted(unknown)}")
    if d.coefficient not in ("identity", "diagonal", "full_symmetric"):
        bad("domain", "coefficient", "must be identity, diagonal or full_symmetric")
    elif d.coefficient == "full_symmetric" and d.dimension != 2:
        bad("domain", "coefficient", "full_symmetric requires dimension = 2")
    for key in ("a1", "a2", "a11", "a12", "a22"):
        try:
            compile_expression(getattr(d, key))
        except (SyntaxError, ValueError) as exc:
            bad("domain", key, f"invalid expression: {exc}")
    if not 0.0 < op.s < 1.0:
        bad("operator", "s", "s must lie in (0,1)")
    if op.mass_mode not in ("lumped", "consistent"):
        bad("operator", "mass_mode", "must be lumped or consistent")
    if op.trials < 1:
        bad("operator", "trials", "must be >= 1")
    if op.n_shells < 2:
        bad("operator", "n_shells", "must be >= 2")
    if not 0.0 < sv.delta <= 1.0:
        bad("solver", "delta", "must lie in (0,1]")
    if not 0.0 < sv.mu <= 1.0:
        bad("solver", "mu", "must lie in (0,1]")
    if not sv.dt > 0:
        bad("solver", "dt", "must be > 0")
    if not sv.t_end > 0:
        bad("solver", "t_end", "must be > 0")
    if sv.picard_iters < 0:
        bad("solver", "picard_iters", "must be >= 0")
    if sv.initial not in PROFILES:
        bad("solver", "initial", f"must be one of {', '.join(PROFILES)}")
    for key in ("delta_grid", "mu_grid"):
        grid = getattr(sw, key)
        if any(b >= a for a, b in zip(grid, grid[1:])):
            bad("sweep", key, "must be strictly decreasing")
        if any(not 0.0 < g <= 1.0 for g in grid):
            bad("sweep", key, "entries must lie in (0,1]")
    if sw.mode not in ("staged", "diagonal"):
        bad("sweep", "mode", "must be staged or diagonal")
    elif sw.mode == "diagonal" and len(sw.delta_grid) != len(sw.mu_grid):
        bad("sweep", "mode", "diagonal sweep needs grids of equal length")
    if any(t < 0 for t in cfg.output.snapshot_times):
        bad("output", "snapshot_times", "must be >= 0")
    return errs


def parse_config(text: str) -> ExperimentConfig:
    errors = []
    values = {name: {} for name in SECTIONS}
    where = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = "__bad__"
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if section is None:
            errors.append(f"line {lineno}: '{key}' outside of any section")
            continue
        if section == "__bad__":
            continue
        block = SECTIONS[section]
        spec = {f.name: f for f in fields(block)}
        if key not in spec:
            errors.append(f"line {lineno}: unknown key '{key}' in [{section}]")
            continue
        if key in values[section]:
            errors.append(f"line {lineno}: duplicate key '{key}' in [{section}]")
            continue
        try:
            values[section][key] = spec[key].metadata["conv"](value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {section}.{key}: type mismatch ({exc}): {value!r}")
            continue
        where[(section, key)] = lineno

    blocks = {name: SECTIONS[name](**values[name]) for name in SECTIONS}
    defaulted = frozenset(f"{name}.{f.name}" for name in SECTIONS for f in fields(SECTIONS[name])
                          if f.name not in values[name])
    cfg = ExperimentConfig(**blocks, defaulted=defaulted)
    errors += _validate(cfg, where)
    if errors:
        raise ConfigError(errors)
    return cfg


def with_overrides(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    """``with_overrides(cfg, solver={"dt": 1e-2})``."""
    out = cfg
    for name, changes in sections.items():
        out = replace(out, **{name: replace(getattr(out, name), **changes)})
    return out
