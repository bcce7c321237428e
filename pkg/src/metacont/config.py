"""Run configuration: a strict YAML schema validated with pydantic.

JSON is a subset of YAML, so JSON files are accepted as well.  Unknown keys
anywhere in the tree are rejected before any computation starts.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_config"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExpressionSpec(_Strict):
    name: str = "custom"
    state: List[str]
    parameter: str = "mu"
    drift: List[str]
    params: Dict[str, float] = {}
    diffusion: Optional[List[List[str]]] = None
    noise_cov: Optional[List[List[str]]] = None
    potential: Optional[str] = None
    nonnegative: bool = False


class ModelSpec(_Strict):
    builtin: Optional[Literal["pitchfork", "neural2", "rosenzweig-macarthur"]] = None
    params: Dict[str, float] = {}
    expression: Optional[ExpressionSpec] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.builtin is None) == (self.expression is None):
            raise ValueError("give exactly one of 'builtin' or 'expression'")
        if self.expression is not None and self.params:
            raise ValueError("'params' applies to built-in models; put constants in expression.params")
        return self


class ParameterSpec(_Strict):
    start: float
    step: PositiveFloat = 0.001
    n_steps: PositiveInt = 5000
    min: float = -math.inf
    max: float = math.inf
    adaptive: bool = False
    newton_tol: PositiveFloat = 1e-10

    @model_validator(mode="after")
    def _range(self):
        if not self.min <= self.start <= self.max:
            raise ValueError("parameter.start must lie in [min, max]")
        return self


class BranchSeed(_Strict):
    name: str
    x0: List[float]
    mu: Optional[float] = None
    direction: Literal["both", "up", "down"] = "both"


class SeedGrid(_Strict):
    lower: List[float]
    upper: List[float]
    points: PositiveInt = 6


class NoiseSpecConfig(_Strict):
    sigma: NonNegativeFloat
    shape: Optional[List[List[float]]] = None
    factor: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _one_noise(self):
        if self.shape is not None and self.factor is not None:
            raise ValueError("give at most one of noise.shape and noise.factor")
        return self


class SolverSpec(_Strict):
    method: Literal["gauss-seidel", "smith", "bartels-stewart"] = "gauss-seidel"
    tol: PositiveFloat = 1e-9
    warm: bool = True


class DistanceSpec(_Strict):
    enabled: bool = True
    pairs: Optional[List[Tuple[str, str]]] = None
    every_k: PositiveInt = 1
    tol: PositiveFloat = 1e-8
    warm: bool = True
    max_iter: PositiveInt = 200


class PathOutputSpec(_Strict):
    mu: float
    decimate: PositiveInt = 100
    t_max: Optional[PositiveFloat] = None


class SimulateSpec(_Strict):
    mu: List[float]
    dt: PositiveFloat = 1e-3
    t_max: PositiveFloat = 1000.0
    rho: PositiveFloat = 0.05
    n_paths: PositiveInt = 100
    seed: int = Field(0, ge=0, lt=2 ** 64)
    sigma: Optional[NonNegativeFloat] = None
    pair: Optional[Tuple[str, str]] = None
    workers: PositiveInt = 1
    path: Optional[PathOutputSpec] = None


class KramersSpec(_Strict):
    sigmas: List[PositiveFloat]
    min_branches: Optional[List[str]] = None
    saddle_branch: Optional[str] = None


class OutputSpec(_Strict):
    directory: str = "out"
    format: Literal["csv", "json"] = "csv"
    figures: bool = False
    ellipse_every: PositiveInt = 1


class RunConfig(_Strict):
    """Complete description of a run; see the README for the schema."""

    model: ModelSpec
    parameter: ParameterSpec
    noise: NoiseSpecConfig
    confidence: PositiveFloat = 1.0
    branches: Optional[List[BranchSeed]] = None
    seed_grid: Optional[SeedGrid] = None
    solver: SolverSpec = SolverSpec()
    distance: DistanceSpec = DistanceSpec()
    simulate: Optional[SimulateSpec] = None
    kramers: Optional[KramersSpec] = None
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _seeds(self):
        if self.branches is None and self.seed_grid is None:
            raise ValueError("give 'branches' or 'seed_grid' to seed the continuation")
        if self.branches is not None:
            names = [b.name for b in self.branches]
            if len(set(names)) != len(names):
                raise ValueError("branch names must be unique")
        return self


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def parse_config(data, overrides=None):
    """Validate a mapping (plus dotted-key ``overrides``) into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    data = _apply_overrides(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def _apply_overrides(data, overrides):
    import copy

    data = copy.deepcopy(data)
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {key}: {p} is not a mapping")
        node[parts[-1]] = value
    return data


def load_config(path, overrides=None):
    """Read and validate a YAML (or JSON) configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data, overrides)
