"""Training driver: seed phase, planner-driven acting, prioritized updates,
periodic greedy evaluation, metrics CSV, and checkpointing.

Random-number streams are namespaced off the run seed with SeedSequence spawn
keys, so toggling one consumer (say, evaluation cadence) never shifts the
draws any other consumer sees.
"""

from __future__ import annotations

import dataclasses
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import Config, ConfigError, serialize, write_resolved
from .envs import Env, shift_augment
from .losses import (NonFiniteLossError, SliceBatch, policy_loss, total_loss,
                     zeros_grads)
from .model import MODEL_HEADS, POLICY_HEADS, ToldParams, WorldModel, target_update
from .nn import Adam, clip_global_norm
from .planner import Planner
from .replay import ReplayBuffer, Transition

METRICS_HEADER = ("env_step,episode_return,loss_reward,loss_value,"
                  "loss_consistency,loss_reconstruction,loss_total,"
                  "loss_policy,eval_mean,eval_std,wall_seconds")

# spawn-key namespaces off the run seed
STREAM_INIT, STREAM_ENV, STREAM_PLANNER, STREAM_REPLAY, STREAM_AUGMENT, STREAM_EVAL = range(6)

PRETRAIN_HEADS = ("h", "d", "h_inv")


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


class TrainingDiverged(RuntimeError):
    pass


def summarize_returns(returns) -> tuple:
    """Mean and population standard deviation of episode returns."""
    r = np.asarray(returns, dtype=np.float64)
    return float(r.mean()), float(r.std())


def evaluate(wm: WorldModel, theta: ToldParams, cfg: Config,
             episodes: int | None = None, seed: int | None = None):
    """Greedy evaluation on freshly seeded environments; returns (mean, std).

    The per-episode seeds depend only on (seed, episode index), so repeated
    calls replay the same fixed suite of initial states and never disturb the
    training streams.
    """
    episodes = cfg.eval_episodes if episodes is None else int(episodes)
    seed = cfg.seed if seed is None else int(seed)
    spec = cfg.env_spec()
    returns = []
    for k in range(episodes):
        env = Env(spec, stream_rng(seed, STREAM_EVAL, k, 0))
        planner = Planner(wm, cfg, stream_rng(seed, STREAM_EVAL, k, 1))
        obs = env.reset()
        total = 0.0
        done = False
        while not done:
            a = planner.act(theta, obs, step=0, eval_mode=True)
            obs, r, done = env.step(a)
            total += r
        returns.append(total)
    return summarize_returns(returns)


class MetricsWriter:
    """Append-only CSV. Episode rows carry the return and mean losses since
    the previous episode row; eval rows carry only the eval statistics.
    wall_seconds stays 0.000 unless timing was requested, keeping repeated
    runs byte-identical."""

    def __init__(self, path, record_wall_time: bool = False):
        self.path = Path(path)
        self.record_wall_time = record_wall_time
        self.t0 = time.perf_counter()
        self.f = open(self.path, "w", encoding="utf-8", newline="\n")
        self.f.write(METRICS_HEADER + "\n")
        self.f.flush()

    def _wall(self) -> str:
        if not self.record_wall_time:
            return "0.000"
        return f"{time.perf_counter() - self.t0:.3f}"

    def episode_row(self, env_step: int, episode_return: float, losses=None):
        vals = [""] * 6 if losses is None else [repr(float(v)) for v in losses]
        self.f.write(f"{env_step},{episode_return!r},{','.join(vals)},,,{self._wall()}\n")
        self.f.flush()

    def eval_row(self, env_step: int, mean: float, std: float):
        self.f.write(f"{env_step},,,,,,,,{mean!r},{std!r},{self._wall()}\n")
        self.f.flush()

    def close(self):
        self.f.close()


class Trainer:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.spec = cfg.env_spec()
        self.env = Env(self.spec, stream_rng(cfg.seed, STREAM_ENV))
        self.wm = WorldModel(self.spec.obs_shape, self.spec.action_dim,
                             d_latent=cfg.d_latent, hidden=cfg.hidden,
                             double_q=cfg.double_q)
        self.theta = self.wm.init_params(stream_rng(cfg.seed, STREAM_INIT))
        self.theta_minus = self.theta.copy()
        self.opt_model = Adam(lr=cfg.lr)
        self.opt_pi = Adam(lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.capacity, alpha=cfg.per_alpha, beta=cfg.per_beta)
        self.planner = Planner(self.wm, cfg, stream_rng(cfg.seed, STREAM_PLANNER))
        self.replay_rng = stream_rng(cfg.seed, STREAM_REPLAY)
        self.augment_rng = stream_rng(cfg.seed, STREAM_AUGMENT)
        self.env_step = 0
        self.eval_count = 0
        self.updates_done = 0
        self._update_accum = 0.0
        self._nonfinite_streak = 0
        if cfg.init_checkpoint:
            self._load_params_only(cfg.init_checkpoint)

    # -- checkpoint plumbing -------------------------------------------------

    def _tensor_dict(self) -> dict:
        out = {}
        for name, t in self.theta.named_tensors():
            out[f"theta.{name}"] = t.array
        for name, t in self.theta_minus.named_tensors():
            out[f"target.{name}"] = t.array
        for tag, opt in (("opt_model", self.opt_model), ("opt_pi", self.opt_pi)):
            st = opt.state()
            out[f"{tag}.t"] = np.asarray(float(st["t"]))
            for k, a in st["m"].items():
                out[f"{tag}.m.{k}"] = a
            for k, a in st["v"].items():
                out[f"{tag}.v.{k}"] = a
        out[ckpt.CONFIG_KEY] = ckpt.encode_config_text(serialize(self.cfg))
        return out

    def save_checkpoint(self, path):
        ckpt.save_checkpoint(path, self._tensor_dict(), env_step=self.env_step)

    @staticmethod
    def _fill_params(params: ToldParams, tensors: dict, prefix: str, path):
        for name, t in params.named_tensors():
            key = f"{prefix}.{name}"
            if key not in tensors:
                raise ckpt.CheckpointError(f"{path}: missing tensor {key!r}")
            arr = tensors[key]
            if arr.shape != t.array.shape:
                raise ckpt.CheckpointError(
                    f"{path}: tensor {key!r} has shape {arr.shape}, expected {t.array.shape}")
            t.array[...] = arr

    def load_checkpoint(self, path):
        """Full restore: parameters, target parameters, optimizer state, step."""
        tensors, env_step = ckpt.load_checkpoint(path)
        self._fill_params(self.theta, tensors, "theta", path)
        self._fill_params(self.theta_minus, tensors, "target", path)
        for tag, opt in (("opt_model", self.opt_model), ("opt_pi", self.opt_pi)):
            tkey = f"{tag}.t"
            if tkey not in tensors:
                raise ckpt.CheckpointError(f"{path}: missing tensor {tkey!r}")
            state = {"t": int(float(tensors[tkey])), "m": {}, "v": {}}
            for key, arr in tensors.items():
                if key.startswith(f"{tag}.m."):
                    state["m"][key[len(tag) + 3:]] = arr
                elif key.startswith(f"{tag}.v."):
                    state["v"][key[len(tag) + 3:]] = arr
            opt.load_state(state)
        self.env_step = int(env_step)

    def _load_params_only(self, path):
        """Parameter initialization from a checkpoint: fresh optimizers, step 0."""
        tensors, _ = ckpt.load_checkpoint(path)
        self._fill_params(self.theta, tensors, "theta", path)
        self._fill_params(self.theta_minus, tensors, "target", path)

    # -- one gradient update ---------------------------------------------------

    def _sample_batch(self) -> tuple:
        cfg = self.cfg
        obs, actions, rewards, weights, ids = self.buffer.sample_stacked(
            cfg.batch_size, cfg.horizon, self.replay_rng)
        enc_obs = obs
        if self.spec.obs_mode == "image":
            enc_obs = np.empty_like(obs)
            for b in range(obs.shape[1]):
                # one shift per slice keeps the H+1 stacks temporally coherent
                enc_obs[:, b] = shift_augment(obs[:, b], self.augment_rng)
        batch = SliceBatch(obs=enc_obs, actions=actions, rewards=rewards,
                           obs_target=obs, weights=weights)
        return batch, ids

    def _update_once(self, hp=None, heads=None, policy: bool = True):
        """Returns (l_r, l_v, l_c, l_rec, total, policy) means or None if the
        loss came out non-finite and the update was skipped."""
        cfg = self.cfg
        hp = cfg if hp is None else hp
        heads = MODEL_HEADS if heads is None else heads
        batch, ids = self._sample_batch()
        grads = zeros_grads(self.theta)
        try:
            breakdown, prio, latents = total_loss(self.wm, self.theta,
                                                  self.theta_minus, batch, hp,
                                                  grads=grads)
            pi_loss = 0.0
            if policy:
                pi_loss = policy_loss(self.wm, self.theta, batch, hp,
                                      grads=grads, latents=latents)
        except NonFiniteLossError:
            self._nonfinite_streak += 1
            if self._nonfinite_streak >= 10:
                rescue = Path(self.cfg.out_dir) / "checkpoint_diverged.bin"
                rescue.parent.mkdir(parents=True, exist_ok=True)
                self.save_checkpoint(rescue)
                raise TrainingDiverged(
                    f"10 consecutive non-finite losses at env step {self.env_step}; "
                    f"state saved to {rescue}") from None
            return None
        self._nonfinite_streak = 0

        model_grads = grads.merged(heads)
        clip_global_norm(model_grads, 10.0)
        self.opt_model.step(self.theta.merged(heads), model_grads)
        if policy:
            pi_grads = grads.merged(POLICY_HEADS)
            clip_global_norm(pi_grads, 10.0)
            self.opt_pi.step(self.theta.merged(POLICY_HEADS), pi_grads)
        target_update(self.theta, self.theta_minus, cfg.zeta)
        self.buffer.update_priorities(ids, prio)
        self.updates_done += 1

        per = np.asarray(breakdown.per_step, dtype=np.float64)  # (H, 4)
        lr_, lv, lc, lrec = per.mean(axis=0)
        return lr_, lv, lc, lrec, breakdown.total, pi_loss

    # -- main loop -------------------------------------------------------------

    def _random_action(self):
        return self.planner.rng.uniform(-1.0, 1.0, self.spec.action_dim)

    def train(self):
        cfg = self.cfg
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(cfg, out / "config.resolved")
        metrics = MetricsWriter(out / "metrics.csv",
                                record_wall_time=cfg.record_wall_time)
        obs = self.env.reset()
        self.planner.reset()
        ep_return = 0.0
        loss_sums = np.zeros(6)
        loss_count = 0
        try:
            while self.env_step < cfg.total_env_steps:
                if self.env_step < cfg.seed_steps:
                    a = self._random_action()
                else:
                    a = self.planner.act(self.theta, obs, self.env_step)
                obs_next, r, done = self.env.step(a)
                self.buffer.push(Transition(obs, a, r, obs_next, done))
                self.env_step += 1
                ep_return += r
                obs = obs_next

                if self.env_step > cfg.seed_steps:
                    self._update_accum += cfg.updates_per_env_step
                    while self._update_accum >= 1.0 - 1e-9:
                        self._update_accum -= 1.0
                        stats = self._update_once()
                        if stats is not None:
                            loss_sums += stats
                            loss_count += 1

                if done:
                    means = loss_sums / loss_count if loss_count else None
                    metrics.episode_row(self.env_step, ep_return, means)
                    ep_return = 0.0
                    loss_sums = np.zeros(6)
                    loss_count = 0
                    obs = self.env.reset()
                    self.planner.reset()

                if self.env_step % cfg.eval_interval == 0:
                    mean, std = evaluate(self.wm, self.theta, cfg)
                    self.eval_count += 1
                    metrics.eval_row(self.env_step, mean, std)

                if (cfg.checkpoint_interval
                        and self.env_step % cfg.checkpoint_interval == 0):
                    self.save_checkpoint(out / f"checkpoint_{self.env_step:08d}.bin")
        finally:
            metrics.close()
        self.save_checkpoint(out / "checkpoint_final.bin")
        return out / "metrics.csv"


def pretrain_world_model(cfg: Config, pretrain_steps: int) -> Trainer:
    """Self-supervised warm start: random-action experience, then updates of
    only the encoder, dynamics, and decoder heads under the consistency and
    reconstruction terms (reward and value coefficients forced to zero).
    Returns the trainer holding the pretrained parameters; with
    pretrain_steps=0 those are exactly the fresh initialization."""
    if cfg.c4 <= 0.0:
        raise ConfigError("c4", "pretraining requires a positive reconstruction "
                                "coefficient")
    if pretrain_steps < 0:
        raise ConfigError("pretrain_steps", "must be nonnegative")
    trainer = Trainer(cfg)
    if pretrain_steps == 0:
        return trainer
    need = cfg.batch_size * (cfg.horizon + 1)
    if pretrain_steps < need:
        raise ConfigError("pretrain_steps",
                          f"must be 0 or at least batch_size * (horizon + 1) = {need}")

    obs = trainer.env.reset()
    for _ in range(pretrain_steps):
        a = trainer._random_action()
        obs_next, r, done = trainer.env.step(a)
        trainer.buffer.push(Transition(obs, a, r, obs_next, done))
        obs = trainer.env.reset() if done else obs_next

    hp = dataclasses.replace(cfg, c1=0.0, c2=0.0)
    n_updates = int(round(pretrain_steps * cfg.updates_per_env_step))
    for _ in range(n_updates):
        trainer._update_once(hp=hp, heads=PRETRAIN_HEADS, policy=False)
    return trainer


def load_model_for_eval(path):
    """Rebuild (cfg, wm, theta) from a checkpoint via its embedded config."""
    from .config import make_config

    tensors, _ = ckpt.load_checkpoint(path)
    if ckpt.CONFIG_KEY not in tensors:
        raise ckpt.CheckpointError(f"{path}: checkpoint has no embedded config")
    cfg = make_config(text=ckpt.decode_config_text(tensors[ckpt.CONFIG_KEY]))
    spec = cfg.env_spec()
    wm = WorldModel(spec.obs_shape, spec.action_dim, d_latent=cfg.d_latent,
                    hidden=cfg.hidden, double_q=cfg.double_q)
    theta = wm.init_params(stream_rng(cfg.seed, STREAM_INIT))
    Trainer._fill_params(theta, tensors, "theta", path)
    return cfg, wm, theta
