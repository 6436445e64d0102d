"""Run configuration: dataclass tree with a strict YAML loader.

Every field has a default; unknown keys anywhere in the tree are a load
error so config typos fail fast instead of silently training with defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass

import yaml

from .env import DEFAULT_REWARD_WEIGHTS, EnvConfig
from .ppo import PpoConfig
from .terrain import KINDS


class ConfigError(ValueError):
    """Raised on unknown keys or malformed values in a config file."""


@dataclass
class TerrainConfig:
    levels: int = 10
    variations: int = 20
    length: float = 8.0
    cell_size: float = 0.05
    kinds: list = field(default_factory=lambda: list(KINDS))


@dataclass
class RunConfig:
    morphology: str = "planar-ref"
    seed: int = 0
    n_envs: int = 256
    iterations: int = 1000
    rollout_horizon: int = 100
    checkpoint_interval: int = 100
    history_len: int = 20
    latent_dim: int = 16
    out_dir: str = "runs/latest"
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def validate(self) -> None:
        if self.n_envs < 1:
            raise ConfigError(f"n_envs must be >= 1, got {self.n_envs}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.rollout_horizon < 2:
            raise ConfigError(f"rollout_horizon must be >= 2, got {self.rollout_horizon}")
        if self.history_len < 1:
            raise ConfigError(f"history_len must be >= 1, got {self.history_len}")
        self.ppo.validate()
        for k in self.terrain.kinds:
            if k not in KINDS:
                raise ConfigError(f"terrain.kinds: unknown kind {k!r}")


_TUPLE_FIELDS = {
    "command_vx_init", "command_vx_max", "mass_scale_range", "payload_range",
    "com_shift_range", "friction_range", "motor_scale_range", "gain_scale_range",
}


def _apply(obj, tree: dict, path: str) -> None:
    valid = {f.name: f for f in fields(obj)}
    for key, value in tree.items():
        where = f"{path}.{key}" if path else key
        if key not in valid:
            raise ConfigError(f"unknown config key {where!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            _apply(current, value, where)
        elif key == "reward_weights":
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping of term -> weight")
            unknown = set(value) - set(DEFAULT_REWARD_WEIGHTS)
            if unknown:
                raise ConfigError(
                    f"{where!r}: unknown reward terms {sorted(unknown)}"
                )
            merged = dict(DEFAULT_REWARD_WEIGHTS)
            merged.update({k: float(v) for k, v in value.items()})
            setattr(obj, key, merged)
        elif key in _TUPLE_FIELDS:
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError(f"{where!r} must be a [low, high] pair")
            setattr(obj, key, (float(value[0]), float(value[1])))
        else:
            setattr(obj, key, value)


def run_config_from_dict(tree: dict) -> RunConfig:
    cfg = RunConfig()
    if tree:
        if not isinstance(tree, dict):
            raise ConfigError("config root must be a mapping")
        _apply(cfg, tree, "")
    cfg.validate()
    return cfg


def load_run_config(path: str) -> RunConfig:
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    if tree is None:
        tree = {}
    return run_config_from_dict(tree)


def run_config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_run_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(run_config_to_dict(cfg), fh, sort_keys=True)
