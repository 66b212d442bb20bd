"""Training objectives: per-step losses, the unrolled total loss, and the
policy objective, each producing gradients for one optimizer step.

Losses follow the latent rollout protocol: z_t is encoded once, every later
latent comes from the dynamics head, and gradients flow back through the whole
unroll. Squared-norm losses sum over feature dimensions; batch reduction is a
mean, with importance weights multiplying per-slice contributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ToldParams, WorldModel


class NonFiniteLossError(RuntimeError):
    """A loss term left the reals; the update should be skipped."""


@dataclass
class SliceBatch:
    """Stacked trajectory slices, time-major.

    obs feeds the encoders (augmented copies in image mode); obs_target holds
    the untouched originals used as reconstruction targets. In state mode the
    two are the same array.
    """

    obs: np.ndarray         # (H+1, B, *obs_shape)
    actions: np.ndarray     # (H, B, m)
    rewards: np.ndarray     # (H, B)
    obs_target: np.ndarray  # (H+1, B, *obs_shape)
    weights: np.ndarray     # (B,) importance weights

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def batch_size(self) -> int:
        return self.actions.shape[1]


@dataclass
class LossBreakdown:
    total: float
    per_step: list = field(default_factory=list)  # (l_r, l_v, l_c, l_rec) per step
    policy_loss: float = 0.0


def zeros_grads(theta: ToldParams) -> ToldParams:
    """A gradient buffer shaped like theta (trainable entries only)."""
    return ToldParams(**{h: theta.head(h).zeros_like() for h in ToldParams.HEADS})


# ---------------------------------------------------------------------------
# single-transition forms (also the oracle surface for the batched path)


def reward_loss(r_hat: float, r: float) -> float:
    return float((r_hat - r) ** 2)


def consistency_loss(wm: WorldModel, theta: ToldParams, theta_minus: ToldParams,
                     z_i, a_i, s_next) -> float:
    pred = wm.dynamics(theta, z_i, a_i)
    tgt = wm.encode(theta_minus, s_next)
    return float(((pred - tgt) ** 2).sum())


def reconstruction_loss(wm: WorldModel, theta: ToldParams, z_i, s_i_original) -> float:
    s_hat = wm.reconstruct(theta, z_i)
    return float(((s_hat - np.asarray(s_i_original, dtype=np.float64)) ** 2).sum())


def td_target(wm: WorldModel, theta: ToldParams, theta_minus: ToldParams,
              r_i, s_next, gamma: float):
    """r + gamma * min-Q of the target net at the target embedding of s_next,
    acting with the live policy. Gradient-free by construction (no tapes)."""
    z_next = wm.encode(theta_minus, s_next)
    a_next = wm.policy_act(theta, z_next)
    return r_i + gamma * wm.q_value(theta_minus, z_next, a_next)


def value_loss(wm: WorldModel, theta: ToldParams, theta_minus: ToldParams,
               z_i, a_i, r_i, s_next, gamma: float) -> float:
    y = td_target(wm, theta, theta_minus, r_i, s_next, gamma)
    q1, q2 = wm.q_pair(theta, z_i, a_i)
    if not wm.double_q:
        return float((q1 - y) ** 2)
    return float(((q1 - y) ** 2 + (q2 - y) ** 2) / 2.0)


def single_step_loss(wm: WorldModel, theta: ToldParams, theta_minus: ToldParams,
                     z_i, a_i, r_i, s_next, s_i_original, hp):
    """(l_r, l_v, l_c, l_rec, combined) at one step, on a given latent."""
    l_r = reward_loss(wm.reward(theta, z_i, a_i), r_i) if hp.c1 > 0 else 0.0
    l_v = value_loss(wm, theta, theta_minus, z_i, a_i, r_i, s_next, hp.gamma) \
        if hp.c2 > 0 else 0.0
    l_c = consistency_loss(wm, theta, theta_minus, z_i, a_i, s_next) if hp.c3 > 0 else 0.0
    l_rec = reconstruction_loss(wm, theta, z_i, s_i_original) if hp.c4 > 0 else 0.0
    combined = hp.c1 * l_r + hp.c2 * l_v + hp.c3 * l_c + hp.c4 * l_rec
    return l_r, l_v, l_c, l_rec, combined


# ---------------------------------------------------------------------------
# batched unrolled objective


def roll_latents(wm: WorldModel, theta: ToldParams, batch: SliceBatch) -> np.ndarray:
    """(H+1, B, d_latent) latents from the rollout protocol, gradient-free."""
    h, b = batch.horizon, batch.batch_size
    z = np.empty((h + 1, b, wm.d_latent))
    z[0] = wm.encode(theta, batch.obs[0])
    for i in range(h):
        z[i + 1] = wm.dynamics(theta, z[i], batch.actions[i])
    return z


def _targets(wm, theta, theta_minus, batch, hp, need_q):
    """Target-side quantities, batched over all H steps: the target-encoder
    embeddings of s_{i+1} and, if needed, the bootstrapped TD targets."""
    h, b = batch.horizon, batch.batch_size
    nxt = batch.obs[1:].reshape((h * b,) + batch.obs.shape[2:])
    z_tgt = wm.encode(theta_minus, nxt)
    y = None
    if need_q:
        a_next = wm.policy_act(theta, z_tgt)
        q_min = wm.q_value(theta_minus, z_tgt, a_next)
        y = batch.rewards + hp.gamma * q_min.reshape(h, b)
    return z_tgt.reshape(h, b, wm.d_latent), y


def total_loss(wm: WorldModel, theta: ToldParams, theta_minus: ToldParams,
               batch: SliceBatch, hp, grads: ToldParams | None = None):
    """The unrolled training objective and (optionally) its gradients.

    Returns (LossBreakdown, per-slice value-loss vector for replay priorities,
    latents (H+1, B, d)). Heads whose coefficient is zero are never evaluated,
    so a c4=0 run exercises exactly the reconstruction-free computation.
    """
    h, b = batch.horizon, batch.batch_size
    w = np.asarray(batch.weights, dtype=np.float64)
    use_r, use_v = hp.c1 > 0, hp.c2 > 0
    use_c, use_rec = hp.c3 > 0, hp.c4 > 0

    z = [None] * (h + 1)
    z[0], tape_h = wm.h.forward(theta.h, batch.obs[0], "train")
    tapes_d = [None] * h
    tapes_r, r_hat = [None] * h, [None] * h
    tapes_q1, tapes_q2, q1_hat, q2_hat = [None] * h, [None] * h, [None] * h, [None] * h
    tapes_rec, s_hat = [None] * h, [None] * h
    for i in range(h):
        za = np.concatenate([z[i], batch.actions[i]], axis=-1)
        z[i + 1], tapes_d[i] = wm.d.forward(theta.d, za, "train")
        if use_r:
            r_hat[i], tapes_r[i] = wm.r.forward(theta.r, za, "train")
        if use_v:
            q1_hat[i], tapes_q1[i] = wm.q1.forward(theta.q, za, "train")
            if wm.double_q:
                q2_hat[i], tapes_q2[i] = wm.q2.forward(theta.q, za, "train")
        if use_rec:
            s_hat[i], tapes_rec[i] = wm.h_inv.forward(theta.h_inv, z[i], "train")

    z_tgt, y = _targets(wm, theta, theta_minus, batch, hp, need_q=use_v)

    lam_pow = hp.lam ** np.arange(h)
    per_step = []
    lv_b = np.zeros((h, b))
    lr_b = np.zeros((h, b))
    lc_b = np.zeros((h, b))
    lrec_b = np.zeros((h, b))
    obs_axes = tuple(range(1, batch.obs.ndim - 1))
    for i in range(h):
        if use_r:
            lr_b[i] = (r_hat[i][:, 0] - batch.rewards[i]) ** 2
        if use_v:
            e1 = (q1_hat[i][:, 0] - y[i]) ** 2
            if wm.double_q:
                lv_b[i] = (e1 + (q2_hat[i][:, 0] - y[i]) ** 2) / 2.0
            else:
                lv_b[i] = e1
        if use_c:
            lc_b[i] = ((z[i + 1] - z_tgt[i]) ** 2).sum(axis=-1)
        if use_rec:
            diff = s_hat[i] - batch.obs_target[i]
            lrec_b[i] = (diff * diff).sum(axis=obs_axes)
        per_step.append((float(np.mean(w * lr_b[i])), float(np.mean(w * lv_b[i])),
                         float(np.mean(w * lc_b[i])), float(np.mean(w * lrec_b[i]))))

    total = 0.0
    for i in range(h):
        l_r, l_v, l_c, l_rec = per_step[i]
        total += lam_pow[i] * (hp.c1 * l_r + hp.c2 * l_v + hp.c3 * l_c + hp.c4 * l_rec)
    if not np.isfinite(total):
        raise NonFiniteLossError(
            f"non-finite training loss (per-step values {per_step})")

    prio = (lam_pow[:, None] * lv_b).sum(axis=0)

    if grads is not None:
        _total_loss_backward(wm, grads, batch, hp, w, z, z_tgt, y,
                             tape_h, tapes_d, tapes_r, r_hat,
                             tapes_q1, q1_hat, tapes_q2, q2_hat,
                             tapes_rec, s_hat)

    return LossBreakdown(total=float(total), per_step=per_step), prio, np.stack(z)


def _total_loss_backward(wm, grads, batch, hp, w, z, z_tgt, y,
                         tape_h, tapes_d, tapes_r, r_hat,
                         tapes_q1, q1_hat, tapes_q2, q2_hat,
                         tapes_rec, s_hat):
    h, b = batch.horizon, batch.batch_size
    dz_heads = [np.zeros((b, wm.d_latent)) for _ in range(h + 1)]
    for i in range(h):
        wc = (hp.lam ** i / b) * w  # (B,) per-slice scale at this step
        if hp.c1 > 0:
            gy = (2.0 * hp.c1) * (r_hat[i][:, 0] - batch.rewards[i]) * wc
            gza = wm.r.backward(tapes_r[i], gy[:, None], into=grads.r)
            dz_heads[i] += gza[:, :wm.d_latent]
        if hp.c2 > 0:
            scale = 0.5 if wm.double_q else 1.0
            gy = (2.0 * hp.c2 * scale) * (q1_hat[i][:, 0] - y[i]) * wc
            gza = wm.q1.backward(tapes_q1[i], gy[:, None], into=grads.q)
            dz_heads[i] += gza[:, :wm.d_latent]
            if wm.double_q:
                gy = (2.0 * hp.c2 * scale) * (q2_hat[i][:, 0] - y[i]) * wc
                gza = wm.q2.backward(tapes_q2[i], gy[:, None], into=grads.q)
                dz_heads[i] += gza[:, :wm.d_latent]
        if hp.c4 > 0:
            gy = (2.0 * hp.c4) * (s_hat[i] - batch.obs_target[i])
            gy *= wc.reshape((b,) + (1,) * (gy.ndim - 1))
            dz_heads[i] += wm.h_inv.backward(tapes_rec[i], gy, into=grads.h_inv)
        if hp.c3 > 0:
            dz_heads[i + 1] += (2.0 * hp.c3) * (z[i + 1] - z_tgt[i]) * wc[:, None]
    dz_chain = np.zeros((b, wm.d_latent))
    for i in range(h - 1, -1, -1):
        gza = wm.d.backward(tapes_d[i], dz_heads[i + 1] + dz_chain, into=grads.d)
        dz_chain = gza[:, :wm.d_latent]
    wm.h.backward(tape_h, dz_heads[0] + dz_chain, into=grads.h)


# ---------------------------------------------------------------------------
# policy objective


def policy_loss(wm: WorldModel, theta: ToldParams, batch: SliceBatch, hp,
                grads: ToldParams | None = None, latents: np.ndarray | None = None):
    """Time-weighted negated Q along the rolled latents; gradients reach only
    the policy head (latents are detached, Q parameters are left alone)."""
    h, b = batch.horizon, batch.batch_size
    if latents is None:
        latents = roll_latents(wm, theta, batch)
    zs = np.asarray(latents[:h]).reshape(h * b, wm.d_latent)

    a, tape_pi = wm.pi.forward(theta.pi, zs, "train")
    za = np.concatenate([zs, a], axis=-1)
    q1, tape_q1 = wm.q1.forward(theta.q, za, "train")
    if wm.double_q:
        q2, tape_q2 = wm.q2.forward(theta.q, za, "train")
        q_min = np.minimum(q1[:, 0], q2[:, 0])
        route1 = (q1[:, 0] <= q2[:, 0]).astype(np.float64)
    else:
        q_min = q1[:, 0]
        route1 = np.ones(h * b)

    lam_pow = np.repeat(hp.lam ** np.arange(h), b)
    loss = float(-(lam_pow * q_min).sum() / b)

    if grads is not None:
        gy = (-lam_pow / b)  # d loss / d q_min
        gza = wm.q1.backward(tape_q1, (gy * route1)[:, None], param_grads=False)
        if wm.double_q:
            gza = gza + wm.q2.backward(tape_q2, (gy * (1.0 - route1))[:, None],
                                       param_grads=False)
        ga = gza[:, wm.d_latent:]
        wm.pi.backward(tape_pi, ga, into=grads.pi)

    return loss
