"""Experiment configuration: one dataclass tree loaded from YAML/JSON, flags override."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .embeddings import DEFAULT_PROMPT_TEMPLATE
from .learner import LearnerConfig

FOOD_PREP_TASK = "F (C & F (P & F (I & F (F & F (H & F Y)))))"
CONDITIONS = ("Ours", "RandomBehavior", "RandomTasks")
PROVIDER_MODES = ("offline", "remote")


class ConfigError(ValueError):
    pass


@dataclass
class ProviderConfig:
    mode: str = "offline"
    describe_url: Optional[str] = None
    embed_url: Optional[str] = None
    token_env: Optional[str] = None
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE


@dataclass
class ExperimentConfig:
    map_path: Optional[str] = None  # None: bundled HomeGrid
    task: str = FOOD_PREP_TASK
    condition: str = "Ours"  # used by single-condition commands; `experiment` runs all
    aux_count: int = 20
    k: int = 4
    ucb_c: float = 0.5
    alpha: float = 0.5
    gamma: float = 0.95
    epsilon: float = 0.1
    max_steps: int = 500
    episodes: int = 2000
    eval_period: int = 25
    seeds: list = field(default_factory=lambda: list(range(7)))
    min_aux: int = 1
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    cache_path: Optional[str] = None  # None: bundled fixture (offline mode)
    out_dir: str = "results"

    def validate(self) -> "ExperimentConfig":
        if self.condition not in CONDITIONS:
            raise ConfigError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.provider.mode not in PROVIDER_MODES:
            raise ConfigError(f"provider.mode must be one of {PROVIDER_MODES}, got {self.provider.mode!r}")
        if self.aux_count < 1:
            raise ConfigError("aux_count must be >= 1")
        if not 1 <= self.min_aux <= self.aux_count:
            raise ConfigError("min_aux must lie in [1, aux_count]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.ucb_c < 0:
            raise ConfigError("ucb_c must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds) or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be distinct non-negative integers")
        if self.map_path is not None and not Path(self.map_path).is_file():
            raise ConfigError(f"map file not found: {self.map_path}")
        if self.provider.mode == "offline":
            if self.cache_path is not None and not Path(self.cache_path).is_file():
                raise ConfigError(f"fixture file not found: {self.cache_path}")
        elif not (self.provider.describe_url and self.provider.embed_url):
            raise ConfigError("remote mode needs provider.describe_url and provider.embed_url")
        try:
            self.learner()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return self

    def learner(self) -> LearnerConfig:
        return LearnerConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            epsilon=self.epsilon,
            max_steps_per_episode=self.max_steps,
            episodes=self.episodes,
            eval_period=self.eval_period,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return from_mapping(apply_overrides(self.to_dict(), changes))


def _coerce(name: str, value: Any, default: Any):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        return list(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def _build(cls, data: Mapping, prefix: str = ""):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value or {}, prefix + name + ".")
        else:
            kwargs[name] = _coerce(prefix + name, value, default)
    return cls(**kwargs)


def from_mapping(data: Mapping) -> ExperimentConfig:
    """Build and validate a config.  A manifest (with a ``config`` key) is accepted too."""
    if isinstance(data, Mapping) and "config" in data and "versions" in data:
        data = data["config"]
    return _build(ExperimentConfig, data).validate()


def load_config(path: Union[str, Path, None]) -> ExperimentConfig:
    """Read a YAML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None
    return from_mapping(data)


def apply_overrides(data: dict, overrides: Mapping[str, Any]) -> dict:
    """Set dotted keys (``provider.mode``) in a nested dict; ``None`` values are skipped."""
    out = json.loads(json.dumps(data))
    for key, value in overrides.items():
        if value is None:
            continue
        node = out
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}")
        node[leaf] = value
    return out
