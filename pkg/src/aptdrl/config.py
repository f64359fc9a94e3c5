"""Run configuration: one flat key/value document (YAML syntax) covering every knob.

Unknown keys are rejected. Command-line flags override file values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .dqn import Hyperparams
from .env import FULL_PASS, EpisodeSchedule, RewardScheme
from .network import DEFAULT_HIDDEN, NetworkConfig
from .pipeline import SmoteConfig, SplitConfig
from .synthgen import SynthConfig


class ConfigError(ValueError):
    """Bad configuration document or override (a usage error)."""


@dataclass
class RunConfig:
    seed: int = 0
    # ingest
    top_n: int = 256
    # preprocessing
    test_fraction: float = 0.2
    stratified: bool = True
    smote: bool = True
    smote_k: int = 5
    paper_order: bool = False
    # network
    hidden: list = field(default_factory=lambda: list(DEFAULT_HIDDEN))
    negative_slope: float = 0.01
    dropout_rate: float = 0.0
    output_normalization: bool = False
    dtype: str = "float32"
    # DQN
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    gradient_steps: int = 3
    exploration_fraction: float = 0.1
    exploration_initial_eps: float = 1.0
    exploration_final_eps: float = 0.02
    learning_rate: float = 1e-3
    lr_decay: float = 0.99
    lr_decay_steps: int = 1000
    total_timesteps: int = 20_000
    eval_interval: int = 500
    learning_starts: int | None = None
    buffer_size: int = 100_000
    max_grad_norm: float | None = None
    target_update_interval: int | None = None
    bootstrap_episode_end: bool = True
    optimizer: str = "adam"
    # environment
    correct_reward: float = 1.0
    incorrect_reward: float = 0.0
    horizon: Any = FULL_PASS
    order: str = "shuffled"
    vary_horizon: list | None = None
    # baselines
    knn_k: int = 5
    sgd_epochs: int = 30
    mlp_hidden: list = field(default_factory=lambda: [128])
    mlp_epochs: int = 200
    # synthetic data
    num_classes: int = 3
    samples_per_class: int = 20
    per_class: list | None = None
    dim: int = 16
    center_separation: float = 1.0
    noise_sigma: float = 0.1
    zero_activity_rate: float = 0.0

    # derived seeds keep each random consumer on its own stream
    @property
    def split_seed(self) -> int:
        return self.seed

    @property
    def smote_seed(self) -> int:
        return self.seed + 1

    @property
    def env_seed(self) -> int:
        return self.seed + 2

    @property
    def train_seed(self) -> int:
        return self.seed + 3

    @property
    def baseline_seed(self) -> int:
        return self.seed + 4

    def split_config(self) -> SplitConfig:
        return SplitConfig(self.test_fraction, self.split_seed, self.stratified)

    def smote_config(self) -> SmoteConfig | None:
        return SmoteConfig(self.smote_k, self.smote_seed) if self.smote else None

    def network_config(self, input_dim: int, output_dim: int) -> NetworkConfig:
        return NetworkConfig(
            input_dim, output_dim, tuple(self.hidden), self.negative_slope, self.dropout_rate, self.output_normalization, self.dtype
        )

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            gamma=self.gamma,
            tau=self.tau,
            batch_size=self.batch_size,
            gradient_steps=self.gradient_steps,
            exploration_fraction=self.exploration_fraction,
            exploration_initial_eps=self.exploration_initial_eps,
            exploration_final_eps=self.exploration_final_eps,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            lr_decay_steps=self.lr_decay_steps,
            total_timesteps=self.total_timesteps,
            eval_interval=self.eval_interval,
            learning_starts=self.learning_starts,
            buffer_size=self.buffer_size,
            max_grad_norm=self.max_grad_norm,
            target_update_interval=self.target_update_interval,
            bootstrap_episode_end=self.bootstrap_episode_end,
            optimizer=self.optimizer,
            seed=self.train_seed,
        )

    def reward_scheme(self) -> RewardScheme:
        return RewardScheme(self.correct_reward, self.incorrect_reward)

    def episode_schedule(self) -> EpisodeSchedule:
        vary = tuple(self.vary_horizon) if self.vary_horizon else None
        return EpisodeSchedule(self.horizon, self.order, self.env_seed, vary)

    def synth_config(self) -> SynthConfig:
        per_class = self.per_class or [self.samples_per_class] * self.num_classes
        return SynthConfig(
            self.num_classes, tuple(per_class), self.dim, self.center_separation, self.noise_sigma, self.seed, self.zero_activity_rate
        )

    def validate(self) -> "RunConfig":
        """Build every component config once so bad values surface as ConfigError."""
        try:
            self.split_config()
            self.smote_config()
            self.network_config(1, 1)
            self.hyperparams()
            self.reward_scheme()
            self.episode_schedule()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_FLOATS = {n for n, f in _FIELDS.items() if f.type in ("float", "float | None")}
_INTS = {n for n, f in _FIELDS.items() if f.type in ("int", "int | None")}
_BOOLS = {n for n, f in _FIELDS.items() if f.type == "bool"}


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        if _FIELDS[key].default is None or key in ("vary_horizon", "per_class"):
            return None
        raise ConfigError(f"{key} cannot be null")
    if key in _BOOLS:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if key in _INTS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _FLOATS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key in ("hidden", "mlp_hidden", "per_class", "vary_horizon"):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key} must be a list of integers, got {value!r}")
        return value
    if key == "horizon":
        if value != FULL_PASS and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"horizon must be an integer or {FULL_PASS!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def apply_overrides(cfg: RunConfig, values: dict) -> RunConfig:
    for key, value in values.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown configuration key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not a valid key/value document ({exc})") from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a flat key/value mapping")
        apply_overrides(cfg, raw)
    if overrides:
        apply_overrides(cfg, overrides)
    return cfg.validate()


def parse_assignment(text: str) -> tuple[str, Any]:
    """``key=value`` with a YAML-typed value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: {exc}") from None
    return key.strip(), value


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)
