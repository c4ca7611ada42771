"""Experiment configuration: a YAML file mapped onto dataclasses.

Unknown keys are rejected at every level. The canonical form is the
dataclass field order, so ``load(dump(cfg))`` reproduces ``cfg`` and
``dump(load(text))`` is the canonical text.
"""
import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from typing import List, Optional, Union

import yaml

from lrcssp.api.model import GeneratorSpec, CONTEXT_KINDS
from lrcssp.api.learner import LearnerConfig
from lrcssp.error import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ContextSpec:
    kind: str = 'uniform'
    K: int = 500
    c0: Optional[List[float]] = None

    def validate(self):
        if self.kind not in CONTEXT_KINDS or self.kind == 'adaptive':
            raise ConfigError('contexts.kind must be one of uniform, cyclic_vertices, fixed')
        if self.K < 1:
            raise ConfigError('contexts.K must be at least 1')
        if self.kind == 'fixed' and self.c0 is None:
            raise ConfigError('contexts.c0 is required for fixed contexts')


@dataclass
class BaselineConfig:
    context_blind: bool = False

    def validate(self):
        pass


@dataclass
class ExperimentConfig:
    """Everything one ``lrcssp run`` needs.

    ``model_path`` loads a model file written by ``lrcssp gen`` instead of
    generating one. ``oracle_informed`` sets ``b_star_init`` from the
    empirical ``B*`` and ``l_min`` from the smallest loss embedding entry.
    ``optimism_check`` records confidence-set coverage and the true optimal
    value in every interval event.
    """
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    contexts: ContextSpec = field(default_factory=ContextSpec)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    output_dir: str = 'runs'
    model_path: Optional[str] = None
    oracle_informed: bool = False
    optimism_check: bool = False
    oracle_tol: float = 1e-8

    def validate(self):
        self.generator.validate()
        self.contexts.validate()
        self.learner.validate()
        self.baselines.validate()
        if not self.seeds:
            raise ConfigError('seeds must not be empty')
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError('seeds must be distinct')
        if min(self.seeds) < 0:
            raise ConfigError('seeds must be non-negative')
        if self.contexts.c0 is not None and len(self.contexts.c0) != self.generator.d:
            raise ConfigError('contexts.c0 must have length generator.d')
        if self.oracle_tol <= 0:
            raise ConfigError('oracle_tol must be positive')
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


NESTED = {'generator': GeneratorSpec, 'contexts': ContextSpec,
          'learner': LearnerConfig, 'baselines': BaselineConfig}


def _coerce(value, hint, where):
    if typing.get_origin(hint) is Union:
        if value is None:
            return None
        hint = next(h for h in typing.get_args(hint) if h is not type(None))
    try:
        if hint is bool:
            if not isinstance(value, bool):
                raise ValueError('expected true or false, got {!r}'.format(value))
            return value
        if isinstance(value, bool):
            raise ValueError('expected {}, got {!r}'.format(getattr(hint, '__name__', hint), value))
        if hint is int:
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError('expected an integer, got {!r}'.format(value))
            return int(as_float)
        if hint is float:
            # YAML 1.1 reads 1e-6 as a string
            return float(value)
        if hint is str:
            if not isinstance(value, str):
                raise ValueError('expected a string, got {!r}'.format(value))
            return value
        if typing.get_origin(hint) is list:
            if not isinstance(value, list):
                raise ValueError('expected a list, got {!r}'.format(value))
            (item,) = typing.get_args(hint)
            return [_coerce(v, item, where) for v in value]
    except (TypeError, ValueError) as e:
        raise ConfigError('{}: {}'.format(where, e))
    return value


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError('{} must be a mapping'.format(where or 'config'))
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(map(str, data)) - set(names))
    if unknown:
        raise ConfigError('unknown key(s) in {}: {}'.format(where or 'config', ', '.join(unknown)))
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name in names:
        if name not in data:
            continue
        key = '{}.{}'.format(where, name) if where else name
        if cls is ExperimentConfig and name in NESTED:
            kwargs[name] = _build(NESTED[name], data[name], key)
        else:
            kwargs[name] = _coerce(data[name], hints[name], key)
    return cls(**kwargs)


def config_from_dict(data):
    return _build(ExperimentConfig, data, '').validate()


def load_config(path):
    """Read and validate an experiment config file

    Args:
        path (str): YAML file

    Returns:
        ExperimentConfig: the validated config

    Raises:
        lrcssp.ConfigError: unreadable file, unknown keys or invalid values
    """
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError('cannot read config {}: {}'.format(path, e))
    except yaml.YAMLError as e:
        raise ConfigError('config {} is not valid YAML: {}'.format(path, e))
    return config_from_dict(data)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
