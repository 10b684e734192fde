"""Run configuration: dataclasses, strict JSON parsing, round-trip serialization.

Unknown keys are errors so typos surface immediately. A config file may give
any subset of sections/fields; missing ones take the defaults below. The
``MOMENTRL_SEED`` environment variable overrides the *default* top-level
seed — an explicit ``seed`` in the file always wins.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

SEED_ENV_VAR = "MOMENTRL_SEED"


class ConfigError(ValueError):
    """Raised for malformed config files or invalid field values."""


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 2000
    n_val: int = 1000
    n_test: int = 1000
    oos_fraction: float = 0.5
    n_frames: int = 64
    d_v: int = 32
    d_q: int = 16
    signal_noise_sigma: float = 0.5
    moment_len_range: tuple[float, float] = (0.1, 0.4)
    seed: int = 42

    def validate(self) -> None:
        if not 0.0 <= self.oos_fraction <= 1.0:
            raise ConfigError(f"oos_fraction must be in [0, 1], got {self.oos_fraction}")
        lo, hi = self.moment_len_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"moment_len_range must sit inside (0, 1], got {self.moment_len_range}")
        for name in ("n_train", "n_val", "n_test", "n_frames", "d_v", "d_q"):
            if getattr(self, name) < 1 and name != "n_train":
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class ModelConfig:
    encoder_hidden: int = 64
    encoder_pool: int = 4
    local_dim: int = 32
    loc_dim: int = 16
    obs_dim: int = 64
    policy_hidden: int = 64
    fusion_evi_dim: int = 16
    fusion_iou_dim: int = 8
    fusion_loc_dim: int = 8
    fusion_hidden: int = 32


@dataclass(frozen=True)
class AgentConfig:
    steps: int = 10
    f0: float = 0.12
    step_size: float = 0.1
    offsets: tuple[float, ...] = (0.0, 0.02, 0.04, 0.08, 0.1, 0.12)
    shift_large: float = 0.16
    shift_small: float = 0.05

    def validate(self) -> None:
        if len(self.offsets) != 6:
            raise ConfigError(f"offsets table must have 6 entries, got {len(self.offsets)}")
        if any(o < 0.0 or o > self.f0 for o in self.offsets):
            raise ConfigError(f"offsets must lie within [0, f0={self.f0}], got {self.offsets}")
        if self.f0 <= 0.0 or self.step_size <= 0.0:
            raise ConfigError("f0 and step_size must be positive")


@dataclass(frozen=True)
class RewardConfig:
    rho: float = 0.0
    beta: float = -0.8
    theta: float = 0.4
    reward_branch_as_printed: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError(f"theta must be in [0, 1), got {self.theta}")


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    discount: float = 0.95
    batch_size: int = 1
    eval_every: int = 1
    fusion_update_agents: bool = False
    w_evi: float = 1.0
    w_iou: float = 1.0
    w_dist: float = 1.0
    w_loc: float = 1.0
    w_policy: float = 1.0
    w_value: float = 1.0
    w_trust: float = 1.0


@dataclass(frozen=True)
class OosConfig:
    objective: str = "f1"
    pool_size: int = 50
    recall_ks: tuple[int, ...] = (1, 10, 100)

    def validate(self) -> None:
        if self.objective not in ("f1", "accuracy"):
            raise ConfigError(f"oos objective must be 'f1' or 'accuracy', got {self.objective!r}")
        if self.pool_size < 2:
            raise ConfigError(f"pool_size must be at least 2, got {self.pool_size}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    oos: OosConfig = field(default_factory=OosConfig)

    def validate(self) -> None:
        for section in (self.dataset, self.agent, self.reward, self.oos):
            section.validate()
        if self.model.encoder_pool < 1 or self.model.encoder_pool > self.dataset.n_frames:
            raise ConfigError("encoder_pool must be in [1, n_frames]")

    @property
    def min_gap(self) -> float:
        """Smallest allowed start/end separation: one frame."""
        return 1.0 / self.dataset.n_frames


_TUPLE_FIELDS = {"moment_len_range", "offsets", "recall_ks"}


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _from_dict(_SECTION_TYPES[key], value, f"{where}.{key}")
        elif key in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}.{key}: expected a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "agent": AgentConfig,
    "reward": RewardConfig,
    "optim": OptimConfig,
    "training": TrainingConfig,
    "oos": OosConfig,
}


def config_from_dict(data: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, data, "config")
    if "seed" not in data:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            try:
                cfg = dataclasses.replace(cfg, seed=int(env))
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def loads_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def load_config(path: str | Path) -> RunConfig:
    return loads_config(Path(path).read_text())


def default_config() -> RunConfig:
    return config_from_dict({})
