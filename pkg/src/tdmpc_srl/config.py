"""Flat run configuration: defaults, file parsing, validation, serialization.

Config files are plain ``key=value`` text with ``#`` comments. Keys map 1:1
onto Config fields (the file key for the horizon discount is ``lambda``,
stored as ``lam``). Unknown keys are rejected; command-line flags override
file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .envs import ENV_NAMES, EnvSpec


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class Config:
    # environment
    env: str = "pendulum_swingup"
    obs_mode: str = "state"
    image_resolution: int = 32
    frame_stack: int = 3
    episode_length: int = 200
    action_repeat: int = 0  # 0 = auto: 2 in image mode, 1 in state mode

    # model
    d_latent: int = 50
    hidden: int = 256
    double_q: bool = True

    # objective
    gamma: float = 0.99
    lam: float = 0.5
    zeta: float = 0.01
    c1: float = 0.5
    c2: float = 0.1
    c3: float = 2.0
    c4: float = 0.25
    horizon: int = 5
    per_step_scale: bool = False  # extra 1/H on per-step losses
    lr: float = 1e-3
    batch_size: int = 128

    # planner
    plan_j: int = 6
    n_gauss: int = 512
    n_policy: int = 24
    top_k: int = 64
    tau: float = 0.5
    sigma_init: float = 0.5
    eps_start: float = 0.5
    eps_end: float = 0.05
    eps_decay_steps: int = 15_000
    std_returns: bool = True
    weight_mode: str = "exp"

    # replay
    capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta: float = 0.4

    # run
    total_env_steps: int = 30_000
    seed_steps: int = 1_000
    eval_interval: int = 2_000
    eval_episodes: int = 10
    updates_per_env_step: float = 1.0
    checkpoint_interval: int = 10_000
    seed: int = 0
    out_dir: str = "run_out"
    record_wall_time: bool = False
    init_checkpoint: str = ""

    # -- derived views -----------------------------------------------------

    @property
    def eps_schedule(self):
        return (self.eps_start, self.eps_end, self.eps_decay_steps)

    def resolved_action_repeat(self) -> int:
        if self.action_repeat != 0:
            return self.action_repeat
        return 2 if self.obs_mode == "image" else 1

    def env_spec(self) -> EnvSpec:
        return EnvSpec(name=self.env, obs_mode=self.obs_mode,
                       image_resolution=self.image_resolution,
                       frame_stack=self.frame_stack,
                       episode_length=self.episode_length,
                       action_repeat=self.resolved_action_repeat())


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}
# the one file-key that differs from its field name ("lambda" is reserved)
_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_KEY = {"lam": "lambda"}


def field_for_key(key: str) -> str:
    if key in _FIELD_TO_KEY:  # "lam" is internal; the public key is "lambda"
        raise ConfigError(key, "unknown key")
    name = _KEY_TO_FIELD.get(key, key)
    if name not in _FIELDS:
        raise ConfigError(key, "unknown key")
    return name


def parse_value(key: str, raw: str):
    name = field_for_key(key)
    typ = _FIELDS[name].type
    raw = raw.strip()
    try:
        if typ == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(key, f"cannot parse {raw!r} as {typ}: {e}") from None


def load_config_file(path) -> dict:
    """key=value lines -> {field_name: typed value}; # starts a comment."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        out[field_for_key(key)] = parse_value(key, raw)
    return out


def make_config(file_path=None, overrides: dict | None = None,
                text: str | None = None) -> Config:
    """Defaults, then file values, then overrides (flags win). Validates."""
    values = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    if text is not None:
        values.update(parse_config_text(text))
    for key, val in (overrides or {}).items():
        name = field_for_key(key)
        values[name] = parse_value(key, str(val)) if isinstance(val, str) else val
    cfg = Config(**values)
    validate(cfg)
    return cfg


def validate(cfg: Config):
    def need(cond: bool, key: str, msg: str):
        if not cond:
            raise ConfigError(key, msg)

    need(cfg.env in ENV_NAMES, "env", f"must be one of {ENV_NAMES}")
    need(cfg.obs_mode in ("state", "image"), "obs_mode", "must be state or image")
    need(0.0 <= cfg.gamma < 1.0, "gamma", "must be in [0, 1)")
    need(0.0 < cfg.lam <= 1.0, "lambda", "must be in (0, 1]")
    need(0.0 <= cfg.zeta < 1.0, "zeta", "must be in [0, 1)")
    need(cfg.tau > 0.0, "tau", "must be positive")
    for key in ("c1", "c2", "c3", "c4"):
        need(getattr(cfg, key) >= 0.0, key, "must be nonnegative")
    need(cfg.horizon >= 1, "horizon", "must be at least 1")
    need(cfg.plan_j >= 1, "plan_j", "must be at least 1")
    need(cfg.n_gauss >= 1, "n_gauss", "must be at least 1")
    need(cfg.n_policy >= 0, "n_policy", "must be nonnegative")
    need(cfg.top_k >= 1, "top_k", "must be at least 1")
    need(cfg.sigma_init > 0.0, "sigma_init", "must be positive")
    need(cfg.eps_start >= cfg.eps_end >= 0.0, "eps_end",
         "schedule must satisfy eps_start >= eps_end >= 0")
    need(cfg.weight_mode in ("exp", "linear"), "weight_mode", "must be exp or linear")
    need(cfg.lr > 0.0, "lr", "must be positive")
    need(cfg.d_latent >= 1, "d_latent", "must be at least 1")
    need(cfg.hidden >= 1, "hidden", "must be at least 1")
    need(cfg.batch_size >= 1, "batch_size", "must be at least 1")
    need(0.0 <= cfg.per_alpha <= 1.0, "per_alpha", "must be in [0, 1]")
    need(0.0 <= cfg.per_beta <= 1.0, "per_beta", "must be in [0, 1]")
    need(cfg.capacity >= cfg.batch_size * (cfg.horizon + 1), "capacity",
         "must hold at least one batch of slices")
    need(cfg.episode_length >= cfg.horizon + 1, "episode_length",
         "must be at least horizon + 1")
    need(cfg.seed_steps >= cfg.batch_size * (cfg.horizon + 1), "seed_steps",
         f"must be at least batch_size * (horizon + 1) = "
         f"{cfg.batch_size * (cfg.horizon + 1)}")
    need(cfg.total_env_steps >= cfg.seed_steps, "total_env_steps",
         "must be at least seed_steps")
    need(cfg.eval_interval >= 1, "eval_interval", "must be at least 1")
    need(cfg.eval_episodes >= 1, "eval_episodes", "must be at least 1")
    need(cfg.updates_per_env_step >= 0.0, "updates_per_env_step", "must be nonnegative")
    need(cfg.checkpoint_interval >= 0, "checkpoint_interval", "must be nonnegative")
    need(cfg.action_repeat >= 0, "action_repeat", "must be nonnegative (0 = auto)")
    if cfg.obs_mode == "image":
        need(cfg.image_resolution >= 16 and cfg.image_resolution % 16 == 0,
             "image_resolution", "must be a multiple of 16 and >= 16")
        need(cfg.frame_stack >= 1, "frame_stack", "must be at least 1")


def serialize(cfg: Config) -> str:
    """Full effective configuration, one key per line, parser round-trippable."""
    lines = []
    for f in dataclasses.fields(Config):
        key = _FIELD_TO_KEY.get(f.name, f.name)
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"


def write_resolved(cfg: Config, path):
    Path(path).write_text(serialize(cfg), encoding="utf-8")
