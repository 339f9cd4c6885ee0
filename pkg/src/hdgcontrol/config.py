"""Run configuration: JSON files, command-line overrides, validation."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .mesh import MAX_LEVEL
from .problem import (
    ProblemData, VectorField, bubble, constant_beta, constant_field, experiment_beta,
    rotation_beta, zero_beta, zero_field,
)

EXPERIMENTS = ("smooth", "nonsmooth", "custom")
METHODS = ("monolithic", "condensed")
A3_POLICIES = ("error", "warn", "ignore")
NAMED_SCALARS = {"zero": zero_field, "one": constant_field(1.0), "bubble": bubble}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    epsilon: float
    gamma: float = 1.0
    k: int = 1
    levels: tuple = (1, 5)
    method: str = "condensed"
    sigma: str = "constant:2"
    beta: str = "experiment"
    quad_boost: int = 0
    out: str = "results"
    reference_level: int = 8
    a3: str | None = None
    f: str = "zero"
    y_d: str = "bubble"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        validate(self)

    @property
    def level_range(self) -> range:
        return range(self.levels[0], self.levels[1] + 1)

    @property
    def a3_policy(self) -> str:
        """Experiments outside the convection-dominated regime only warn by default."""
        if self.a3 is not None:
            return self.a3
        return "warn" if self.experiment == "nonsmooth" else "error"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _fail(field, message):
    raise ConfigurationError(f"{field}: {message}", field)


def validate(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        _fail("experiment", f"must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    for name in ("epsilon", "gamma"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not np.isfinite(v):
            _fail(name, f"must be a positive number, got {v!r}")
    if isinstance(cfg.k, bool) or not isinstance(cfg.k, int) or cfg.k not in (0, 1, 2, 3):
        _fail("k", f"must be 0, 1, 2 or 3, got {cfg.k!r}")
    lv = cfg.levels
    if (len(lv) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in lv)
            or not 1 <= lv[0] <= lv[1] <= MAX_LEVEL):
        _fail("levels", f"must be [lo, hi] with 1 <= lo <= hi <= {MAX_LEVEL}, got {list(lv)!r}")
    if cfg.method not in METHODS:
        _fail("method", f"must be one of {METHODS}, got {cfg.method!r}")
    if not isinstance(cfg.quad_boost, int) or cfg.quad_boost < 0:
        _fail("quad_boost", f"must be a nonnegative integer, got {cfg.quad_boost!r}")
    if not isinstance(cfg.reference_level, int) or not lv[1] < cfg.reference_level <= MAX_LEVEL:
        if cfg.experiment == "nonsmooth":
            _fail("reference_level", f"must exceed the finest level {lv[1]} and be <= {MAX_LEVEL}")
    if cfg.a3 is not None and cfg.a3 not in A3_POLICIES:
        _fail("a3", f"must be one of {A3_POLICIES}, got {cfg.a3!r}")
    parse_beta(cfg.beta)
    parse_sigma(cfg.sigma, zero_beta())
    for name in ("f", "y_d"):
        parse_scalar(getattr(cfg, name), name)


_PAIR = re.compile(r"^constant:\(?\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)?$")


def parse_beta(spec: str) -> VectorField:
    if spec == "experiment":
        return experiment_beta()
    if spec == "zero":
        return zero_beta()
    if spec == "rotation":
        return rotation_beta()
    m = _PAIR.match(str(spec))
    if m:
        try:
            return constant_beta(float(m.group(1)), float(m.group(2)))
        except ValueError:
            pass
    _fail("beta", f"expected 'experiment', 'zero', 'rotation' or 'constant:(a,b)', got {spec!r}")


def parse_sigma(spec, beta: VectorField):
    """``constant:<c>``, a bare number, or ``balanced`` (sigma = -div(beta)/2)."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return constant_field(float(spec))
    spec = str(spec)
    if spec == "balanced":
        return lambda x, y: -0.5 * beta.divergence(x, y)
    value = spec.split(":", 1)[1] if spec.startswith("constant:") else spec
    try:
        return constant_field(float(value))
    except ValueError:
        _fail("sigma", f"expected 'constant:<c>', a number or 'balanced', got {spec!r}")


def parse_scalar(spec: str, field: str):
    if spec in NAMED_SCALARS:
        return NAMED_SCALARS[spec]
    try:
        return constant_field(float(spec))
    except (TypeError, ValueError):
        _fail(field, f"expected one of {sorted(NAMED_SCALARS)} or a number, got {spec!r}")


def parse_levels(text: str) -> tuple:
    """``"A..B"``, ``"A-B"`` or a single level."""
    m = re.match(r"^\s*(\d+)\s*(?:\.\.|-)\s*(\d+)\s*$", str(text))
    if m:
        return int(m.group(1)), int(m.group(2))
    if str(text).strip().isdigit():
        return int(text), int(text)
    _fail("levels", f"expected 'A..B', got {text!r}")


def parse_config(path=None, overrides: dict | None = None, experiment: str | None = None) -> RunConfig:
    """Build a validated config from an optional JSON file plus overrides.

    Overrides win over file values; ``None`` overrides are ignored.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config: invalid JSON ({exc})", "config") from exc
        if not isinstance(raw, dict):
            _fail("config", "top level must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        _fail(sorted(unknown)[0], "unknown key")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if experiment is not None:
        raw["experiment"] = experiment
    for required in ("experiment", "epsilon"):
        if required not in raw:
            _fail(required, "missing")
    if isinstance(raw.get("epsilon"), str):
        try:
            raw["epsilon"] = float(raw["epsilon"])
        except ValueError:
            _fail("epsilon", f"not a number: {raw['epsilon']!r}")
    return RunConfig(**raw)


def build_problem(cfg: RunConfig):
    """Problem data (and the exact solution for the smooth test)."""
    from .problem import nonsmooth_problem, smooth_problem

    beta = parse_beta(cfg.beta)
    sigma = parse_sigma(cfg.sigma, beta)
    if cfg.experiment == "smooth":
        data, exact = smooth_problem(cfg.epsilon, cfg.k, cfg.gamma, beta=beta,
                                     quad_boost=cfg.quad_boost)
        f = exact.source(beta, sigma)
        y_d = exact.desired_state(beta, sigma)
        return data.with_(sigma=sigma, f=f, y_d=y_d, sigma_label=str(cfg.sigma)), exact
    if cfg.experiment == "nonsmooth":
        data = nonsmooth_problem(cfg.epsilon, cfg.k, cfg.gamma, beta=beta, quad_boost=cfg.quad_boost)
        return data.with_(sigma=sigma, sigma_label=str(cfg.sigma), f=parse_scalar(cfg.f, "f"),
                          y_d=parse_scalar(cfg.y_d, "y_d")), None
    data = ProblemData(
        epsilon=cfg.epsilon, gamma=cfg.gamma, beta=beta, sigma=sigma,
        f=parse_scalar(cfg.f, "f"), y_d=parse_scalar(cfg.y_d, "y_d"), k=cfg.k,
        quad_boost=cfg.quad_boost, sigma_label=str(cfg.sigma),
    )
    return data, None
