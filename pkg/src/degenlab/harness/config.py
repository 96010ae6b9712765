"""Experiment configuration: JSON documents validated into frozen dataclasses.

Every section rejects unknown keys; errors carry the dotted path of the
offending field (``problem.data.kind``).
"""

from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from typing import Any, Union

from ..errors import ConfigError

COMMANDS = ("solve", "sweep-eps", "exponents", "bernstein-check", "jet-fuzz",
            "barrier-check", "scaling-check", "convergence")
EVOLUTION_COMMANDS = ("solve", "sweep-eps", "exponents", "bernstein-check",
                      "barrier-check", "convergence")
FAMILIES = ("plaplace", "fully_nonlinear", "general_quasilinear")
DATA_KINDS = ("exact", "constant", "affine", "cos", "bump", "halfcube")


@dataclass(frozen=True)
class DataConfig:
    """Boundary/initial data.

    ``exact``: the explicit solution of the family; ``constant``: ``value``;
    ``affine``: ``coeffs . x + speed t + value``; ``cos``:
    ``amplitude prod cos(frequency x_i)``; ``bump``:
    ``value + amplitude exp(-|x|^2 / width^2)``; ``halfcube``:
    ``coeffs . x' + amplitude x_n (1 - x_1^2)``.
    """

    kind: str = "exact"
    value: float = 0.0
    coeffs: tuple[float, ...] = (1.0,)
    speed: float = 0.0
    amplitude: float = 0.5
    frequency: float = 1.0
    width: float = 0.5


@dataclass(frozen=True)
class OperatorConfig:
    kind: str = "trace"
    matrices: tuple[tuple[tuple[float, ...], ...], ...] | None = None
    scale: float = 0.1


@dataclass(frozen=True)
class ProblemConfig:
    family: str = "plaplace"
    p: float | None = 3.0
    gamma: float | None = None
    epsilon: float = 0.05
    dim: int = 2
    extent: float = 0.75
    h: float = 0.03125
    dt: float | None = None
    t_span: tuple[float, ...] | None = None
    half_space: bool = False
    gradient_cap: float | None = None
    data: DataConfig = field(default_factory=DataConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)


@dataclass(frozen=True)
class OptionsConfig:
    """Command options; each command reads the subset it needs."""

    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    monitor_radius: float = 0.5
    max_levels: int = 128
    samples: int = 100000
    values: tuple[float, ...] | None = None
    adversarial_fraction: float = 0.1
    domination_samples: int = 200
    deltas: tuple[float, ...] | None = None
    rescale_radius: float = 0.75
    rho: float | None = None
    bound_u: float | None = None
    sample_h: float = 0.015625
    p_list: tuple[float, ...] = (2.5, 3.0, 4.0)
    gamma_list: tuple[float, ...] = (0.5, 1.0, 2.0)
    scaling: tuple[float, ...] = (0.5, 2.0)
    refinements: int = 1


@dataclass(frozen=True)
class Tolerances:
    spread: float = 0.05
    ut_relative: float = 0.1
    exponent: float = 0.1
    time_exponent_min: float = 0.95
    residual: float = 1e-10
    comparison: float = 1e-10
    barrier: float = 1e-8
    algebra: float = 1e-12
    convergence_factor: float = 1.8


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    options: OptionsConfig = field(default_factory=OptionsConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_dir: str = "degenlab_out"
    seed: int = 0

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            _check_seed(seed, "seed")
            cfg = dataclasses.replace(cfg, seed=seed)
        if output_dir is not None:
            cfg = dataclasses.replace(cfg, output_dir=output_dir)
        return cfg


# --------------------------------------------------------------------------
# generic dataclass builder


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError("must not be null", path)
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if value is None:
        raise ConfigError("must not be null", path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError("expected a list", path)
        item = typing.get_args(tp)[0]
        return tuple(_convert(item, v, _join(path, i)) for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path)
        if not math.isfinite(value):
            raise ConfigError("must be finite", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    raise TypeError(f"unsupported field type {tp!r}")


def _build(cls, doc, path: str = ""):
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", path or "<root>")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError("unknown key", _join(path, key))
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in doc:
            kw[f.name] = _convert(hints[f.name], doc[f.name], _join(path, f.name))
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError("missing required key", _join(path, f.name))
    return cls(**kw)


# --------------------------------------------------------------------------
# semantic validation


def _check_seed(seed: int, path: str) -> None:
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer", path)


def _positive(value, path):
    if value is not None and not value > 0:
        raise ConfigError("must be positive", path)


def _ratio_is_integer(a: float, b: float) -> bool:
    k = a / b
    return round(k) >= 1 and abs(k - round(k)) <= 1e-9 * max(1.0, k)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command (expected one of {', '.join(COMMANDS)})", "command")
    _check_seed(cfg.seed, "seed")
    pr = cfg.problem
    if pr.family not in FAMILIES:
        raise ConfigError(f"unknown family (expected one of {', '.join(FAMILIES)})", "problem.family")
    if pr.family in ("plaplace", "general_quasilinear"):
        if pr.p is None:
            raise ConfigError("missing required key", "problem.p")
        if pr.p <= 1:
            raise ConfigError("p must exceed 1", "problem.p")
        if cfg.command in EVOLUTION_COMMANDS and pr.family == "plaplace" and pr.p <= 2:
            raise ConfigError("p must exceed 2 for evolution", "problem.p")
    if pr.family in ("fully_nonlinear", "general_quasilinear"):
        if pr.gamma is None:
            raise ConfigError("missing required key", "problem.gamma")
        if pr.gamma <= 0:
            raise ConfigError("gamma must be positive", "problem.gamma")
    if pr.epsilon < 0:
        raise ConfigError("must be >= 0", "problem.epsilon")
    if cfg.command in EVOLUTION_COMMANDS and pr.epsilon == 0:
        raise ConfigError("evolution requires epsilon > 0", "problem.epsilon")
    if pr.dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2", "problem.dim")
    _positive(pr.extent, "problem.extent")
    _positive(pr.h, "problem.h")
    _positive(pr.dt, "problem.dt")
    _positive(pr.gradient_cap, "problem.gradient_cap")
    if not _ratio_is_integer(pr.extent, pr.h):
        raise ConfigError("extent must be an integer multiple of h", "problem.h")
    if pr.t_span is not None:
        if len(pr.t_span) != 2 or not pr.t_span[0] < pr.t_span[1] <= 0:
            raise ConfigError("t_span must be [t0, t1] with t0 < t1 <= 0", "problem.t_span")
    if pr.dt is not None:
        t0, t1 = pr.t_span or (-pr.extent**2, 0.0)
        if not _ratio_is_integer(t1 - t0, pr.dt):
            raise ConfigError("t_span width must be an integer multiple of dt", "problem.dt")
    d = pr.data
    if d.kind not in DATA_KINDS:
        raise ConfigError(f"unknown data kind (expected one of {', '.join(DATA_KINDS)})", "problem.data.kind")
    if d.kind == "exact" and pr.family == "general_quasilinear":
        raise ConfigError("no explicit solution for the general quasilinear family", "problem.data.kind")
    if d.kind == "exact" and pr.family == "fully_nonlinear" and pr.operator.kind != "trace":
        raise ConfigError("explicit solution is only available for the trace operator", "problem.data.kind")
    if d.kind == "affine" and len(d.coeffs) != pr.dim:
        raise ConfigError(f"need {pr.dim} coefficients", "problem.data.coeffs")
    if d.kind == "halfcube" and (len(d.coeffs) != pr.dim - 1 or pr.dim != 2):
        raise ConfigError("halfcube data needs dim 2 and one tangential coefficient", "problem.data.coeffs")
    _positive(d.width, "problem.data.width")
    op = pr.operator
    if op.kind not in ("trace", "bellman"):
        raise ConfigError("operator kind must be 'trace' or 'bellman'", "problem.operator.kind")
    if op.kind == "bellman":
        if not op.matrices:
            raise ConfigError("bellman operator needs matrices", "problem.operator.matrices")
        for i, A in enumerate(op.matrices):
            if len(A) != pr.dim or any(len(row) != pr.dim for row in A):
                raise ConfigError(f"must be {pr.dim}x{pr.dim}", f"problem.operator.matrices[{i}]")
        _positive(op.scale, "problem.operator.scale")
    o = cfg.options
    if not o.epsilons or any(e <= 0 for e in o.epsilons) or any(
            a <= b for a, b in zip(o.epsilons, o.epsilons[1:])):
        raise ConfigError("must be a strictly decreasing list of positive numbers", "options.epsilons")
    _positive(o.monitor_radius, "options.monitor_radius")
    if o.max_levels < 2:
        raise ConfigError("must be >= 2", "options.max_levels")
    if o.samples < 1:
        raise ConfigError("must be >= 1", "options.samples")
    if not 0 <= o.adversarial_fraction <= 1:
        raise ConfigError("must lie in [0, 1]", "options.adversarial_fraction")
    if o.deltas is not None and (any(x <= 0 for x in o.deltas)
                                 or any(a >= b for a, b in zip(o.deltas, o.deltas[1:]))):
        raise ConfigError("must be a strictly increasing list of positive numbers", "options.deltas")
    _positive(o.rescale_radius, "options.rescale_radius")
    _positive(o.rho, "options.rho")
    _positive(o.sample_h, "options.sample_h")
    if any(p <= 2 for p in o.p_list):
        raise ConfigError("every p must exceed 2", "options.p_list")
    if any(g <= 0 for g in o.gamma_list):
        raise ConfigError("every gamma must be positive", "options.gamma_list")
    if len(o.scaling) != 2 or any(v <= 0 for v in o.scaling):
        raise ConfigError("must be [r, rho] with positive entries", "options.scaling")
    if o.refinements < 1:
        raise ConfigError("must be >= 1", "options.refinements")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno})", "<document>") from None
    return validate(_build(ExperimentConfig, doc))


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return _plain(dataclasses.asdict(cfg))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
