"""Run configuration: nested dataclasses with strict YAML round-tripping.

A RunConfig aggregates every tunable in the stack. Loading is strict: unknown
keys are rejected with their dotted path so typos surface immediately instead
of silently falling back to defaults. config_hash() gives a short digest of
the fully resolved configuration for trace provenance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .comms import CommConfig
from .control import DEFAULT_OFFSETS, Gains
from .world import TRAINING_POOL, TRAJECTORY_KINDS, SimParams


class ConfigError(ValueError):
    pass


@dataclass
class NetConfig:
    hidden: tuple[int, ...] = (256, 256)  # actor/critic hidden widths
    gat_dim: int = 32                     # attention output width
    log_std_init: float = -1.2

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise ConfigError("hidden must be a nonempty tuple of positive widths")
        if self.gat_dim <= 0:
            raise ConfigError("gat_dim must be positive")


@dataclass
class PpoConfig:
    total_steps: int = 500_000
    horizon: int = 128          # env steps per worker segment before bootstrap
    buffer_size: int = 10_240   # transitions per policy update
    batch_size: int = 1_024
    epochs: int = 3
    lr: float = 3e-4            # Adam, decayed linearly to 0 over total_steps
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    checkpoints: int = 10       # evenly spaced saves, plus the initial one

    def __post_init__(self):
        for name in ("total_steps", "horizon", "buffer_size", "batch_size",
                     "epochs", "checkpoints"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.horizon > self.buffer_size:
            raise ConfigError("horizon cannot exceed buffer_size")
        if self.batch_size > self.buffer_size:
            raise ConfigError("batch_size cannot exceed buffer_size")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gae_lambda must lie in [0, 1]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must lie in (0, 1)")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ConfigError("loss coefficients must be nonnegative")


@dataclass
class RunConfig:
    sim: SimParams = field(default_factory=SimParams)
    comm: CommConfig = field(default_factory=CommConfig)
    gains: Gains = field(default_factory=Gains)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    offsets: dict[int, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_OFFSETS))
    t_max: int = 1000                       # control steps per episode
    train_bound: float = 6.0                # training rollout cutoff radius, m
    train_trajectories: tuple[str, ...] = TRAINING_POOL

    def __post_init__(self):
        self.offsets = {int(k): tuple(float(x) for x in v)
                        for k, v in self.offsets.items()}
        for k, v in self.offsets.items():
            if k == 0:
                raise ConfigError("offsets are keyed by follower index; 0 is the leader")
            if len(v) != 3:
                raise ConfigError(f"offsets.{k} must be a 3-vector")
        if self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.train_bound <= 0:
            raise ConfigError("train_bound must be positive")
        self.train_trajectories = tuple(self.train_trajectories)
        for kind in self.train_trajectories:
            if kind not in TRAJECTORY_KINDS:
                raise ConfigError(f"unknown trajectory kind {kind!r} in train_trajectories")
        bad = [i for i in self.comm.attacked if i not in self.offsets]
        if bad:
            raise ConfigError(f"comm.attacked refers to unknown followers {bad}")

    @property
    def n_agents(self) -> int:
        return len(self.offsets) + 1

    @classmethod
    def desk(cls, **overrides) -> "RunConfig":
        """Small-network preset for fast desk-scale runs."""
        cfg = cls(**overrides)
        cfg.net = NetConfig(hidden=(64, 64), gat_dim=16,
                            log_std_init=cfg.net.log_std_init)
        return cfg


# -- (de)serialization --------------------------------------------------------------

_LEAF_TUPLES = {tuple}


def _to_plain(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def to_dict(cfg: RunConfig) -> dict:
    return _to_plain(cfg)


def _from_mapping(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(f"unknown config key: {dotted}")
        target = hints[key]
        if dataclasses.is_dataclass(target):
            kwargs[key] = _from_mapping(target, value, dotted)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value under {path or 'config'}: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    return _from_mapping(RunConfig, data, "")


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    """12-hex-digit digest of the resolved configuration."""
    canon = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
