#!/usr/bin/env python3
"""
Run configuration for the sigexec command line.

One JSON document describes a run. Every section is a pydantic model that
forbids unknown keys, so a misspelt parameter (phi vs. phy) fails
validation with its dotted field path instead of silently using a default.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigError, LevelShortfallError, SigExecError
from market import ModelParams
from problem import ImpactModel, ProblemSpec, control_level_for, levels_from_order

logger = logging.getLogger(__name__)

DEFAULT_PRESETS = Path(__file__).resolve().parent.parent / 'data' / 'presets.json'


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class MarketConfig(StrictModel):
    model: Literal['bm', 'ou_signal', 'order_flow', 'fbm'] = 'bm'
    sigma: float = Field(0.02, gt=0)
    T: float = Field(1.0, gt=0)
    steps: int = Field(500, ge=2)
    I0: float = 0.0
    gamma: float = Field(0.1, gt=0)
    sigma0: float = Field(0.02, gt=0)
    k_flow: float = 1e-4
    kappa: float = Field(5.0, gt=0)
    lambda0: float = Field(5.0, gt=0)
    eta0: float = Field(0.8, gt=0)
    mu0: float = Field(0.0, ge=0)
    mark_convention: Literal['rate', 'mean'] = 'rate'
    H: float = Field(0.5, ge=0.25, lt=1.0)


class ImpactConfig(StrictModel):
    kind: Literal['temporary_linear', 'permanent', 'temporary_plus_permanent',
                  'polynomial_temporary'] = 'temporary_linear'
    lam: float = Field(0.0, ge=0)
    k: float = Field(0.0, ge=0)
    poly: List[float] = Field(default_factory=list)

    def to_model(self) -> ImpactModel:
        return ImpactModel(self.kind, self.lam, self.k, tuple(self.poly))


class ProblemConfig(StrictModel):
    q0: float = 1.0
    alpha: float = Field(0.0, ge=0)
    phi: float = Field(0.0, ge=0)
    impact: ImpactConfig = Field(default_factory=ImpactConfig)


class LevelsConfig(StrictModel):
    N: Optional[int] = Field(None, ge=3)
    M: Optional[int] = Field(None, ge=0)
    order: Optional[int] = Field(None, ge=0)
    order_means: Literal['es', 'control'] = 'es'
    select: bool = False
    selection_z: float = Field(2.0, gt=0)


class PathsConfig(StrictModel):
    n_train: int = Field(10000, ge=1)
    n_test: int = Field(2000, ge=1)
    n_validation: int = Field(0, ge=0)
    antithetic: bool = False


class DataConfig(StrictModel):
    windows_csv: str
    window_length: float = Field(900.0, gt=0)
    horizon: Optional[float] = Field(None, gt=0)
    steps: Optional[int] = Field(None, ge=2)
    train_fraction: float = Field(0.5, gt=0, lt=1)
    normalize: bool = True


class BenchmarkConfig(StrictModel):
    twap: bool = True
    almgren_chriss: bool = False
    constant_speed: bool = False


class ExperimentConfig(StrictModel):
    name: str = 'custom'
    description: str = ''
    market: MarketConfig = Field(default_factory=MarketConfig)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    levels: LevelsConfig = Field(default_factory=LevelsConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    data: Optional[DataConfig] = None
    benchmark: BenchmarkConfig = Field(default_factory=BenchmarkConfig)
    phi_sweep: List[float] = Field(default_factory=list)
    reference: Dict[str, float] = Field(default_factory=dict)
    reference_tolerance: float = Field(1e-3, gt=0)
    assumed: List[str] = Field(default_factory=list)
    max_trace_paths: int = Field(100, ge=0)
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    output_dir: str = 'output'

    @property
    def horizon(self) -> float:
        """Model-time length of a path: the data horizon when windows are loaded."""
        if self.data is not None:
            return self.data.horizon or self.data.window_length
        return self.market.T

    def model_params(self, antithetic: Optional[bool] = None) -> ModelParams:
        fields = self.market.model_dump()
        fields['antithetic'] = self.paths.antithetic if antithetic is None else antithetic
        return ModelParams(**fields)

    def resolved_levels(self) -> Tuple[int, int]:
        """(M, N) after applying the order mapping and defaults."""
        impact = self.problem.impact.to_model()
        if self.levels.order is not None:
            return levels_from_order(self.levels.order, self.levels.order_means, impact)
        N = self.levels.N if self.levels.N is not None else 7
        M = self.levels.M if self.levels.M is not None else control_level_for(N, impact)
        return M, N

    def problem_spec(self, phi: Optional[float] = None) -> ProblemSpec:
        M, N = self.resolved_levels()
        return ProblemSpec(
            q0=self.problem.q0,
            alpha=self.problem.alpha,
            phi=self.problem.phi if phi is None else phi,
            impact=self.problem.impact.to_model(),
            T=self.horizon,
            level_l=M,
            level_es=N,
        )

    def resolved(self) -> Dict[str, Any]:
        """The full config with defaults filled in, plus the resolved levels."""
        data = self.model_dump(mode='json')
        M, N = self.resolved_levels()
        data['levels'].update({'M': M, 'N': N})
        return data


def _field_paths(error: ValidationError) -> List[str]:
    return ['.'.join(str(part) for part in item['loc']) for item in error.errors()]


def validate_config(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Validate a config document and check every module precondition up front."""
    data = json.loads(json.dumps(raw))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        target = data
        *parents, leaf = dotted.split('.')
        for part in parents:
            target = target.setdefault(part, {})
        target[leaf] = value

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        paths = _field_paths(e)
        details = '; '.join(f"{'.'.join(str(p) for p in item['loc'])}: {item['msg']}" for item in e.errors())
        raise ConfigError(f"invalid configuration: {details}", paths) from e

    if config.paths.antithetic and config.market.model not in ('bm', 'fbm'):
        raise ConfigError("antithetic sampling needs model bm or fbm", ['paths.antithetic'])
    if config.levels.select and config.data is not None:
        raise ConfigError("order selection needs simulated validation paths, not data windows", ['levels.select'])
    if config.levels.select and config.paths.n_validation < 2:
        raise ConfigError("order selection needs paths.n_validation >= 2", ['paths.n_validation'])
    try:
        config.model_params()
        config.problem_spec()
        for phi in config.phi_sweep:
            config.problem_spec(phi=phi)
    except LevelShortfallError as e:
        raise ConfigError(f"invalid configuration: {e}", ['levels']) from e
    except SigExecError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return config


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in config file {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    config = validate_config(raw, overrides)
    logger.debug(f"Loaded config '{config.name}' from {path}")
    return config


def load_presets(path: Union[str, Path] = DEFAULT_PRESETS) -> Dict[str, Dict[str, Any]]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            presets = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"presets file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in presets file {path}: {e}") from e
    return presets['presets']


def preset_config(name: str, overrides: Optional[Dict[str, Any]] = None,
                  path: Union[str, Path] = DEFAULT_PRESETS) -> ExperimentConfig:
    presets = load_presets(path)
    if name not in presets:
        raise ConfigError(f"unknown preset '{name}', available: {sorted(presets)}", ['preset'])
    raw = dict(presets[name])
    raw.setdefault('name', name)
    return validate_config(raw, overrides)
