"""Sampling-based MPC over the learned latent model (adapted MPPI).

Each plan call: sample action sequences around a warm-started Gaussian, score
them with model rollouts, refit the Gaussian to the return-weighted top-k,
iterate, then sample one trajectory from the final elite weights and emit its
first action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ToldParams, WorldModel


@dataclass
class PlanDistribution:
    mu: np.ndarray     # (H, m)
    sigma: np.ndarray  # (H, m) elementwise std


def epsilon_at(step: int, schedule) -> float:
    """Linear decay from start to end over decay_steps, constant afterwards."""
    start, end, decay = schedule
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if decay <= 0 or step >= decay:
        return float(end)
    frac = step / decay
    return float(start + (end - start) * frac)


def evaluate_returns(wm: WorldModel, theta: ToldParams, z0, actions, gamma: float):
    """Model-estimated returns for a batch of action sequences.

    actions: (N, H, m); z0: (d,) shared start latent or (N, d).
    G = sum_t gamma^t R(z_t, a_t) + gamma^H Q(z_H, pi(z_H)), Q the min head.
    """
    actions = np.asarray(actions, dtype=np.float64)
    n, h, _ = actions.shape
    z = np.asarray(z0, dtype=np.float64)
    if z.ndim == 1:
        z = np.broadcast_to(z, (n, z.size)).copy()
    g = np.zeros(n)
    disc = 1.0
    for t in range(h):
        a = actions[:, t]
        g += disc * wm.reward(theta, z, a)
        z = wm.dynamics(theta, z, a)
        disc *= gamma
    a_h = wm.policy_act(theta, z)
    g += disc * wm.q_value(theta, z, a_h)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite return during planning rollout")
    return g


def policy_rollout(wm: WorldModel, theta: ToldParams, z0, horizon: int):
    """(H, m) action sequence from rolling the policy through the dynamics."""
    z = np.asarray(z0, dtype=np.float64)
    out = np.empty((horizon, wm.action_dim))
    for t in range(horizon):
        a = wm.policy_act(theta, z)
        out[t] = a
        z = wm.dynamics(theta, z, a)
    return out


def sample_candidates(dist: PlanDistribution, wm: WorldModel, theta: ToldParams,
                      z0, n_gauss: int, n_policy: int, gamma: float,
                      rng: np.random.Generator):
    """Candidate pool: n_gauss Gaussian draws (clamped to the action box) plus
    n_policy copies of the deterministic policy rollout. Returns (actions
    (N, H, m), returns (N,)); the policy rollout is scored once and tiled."""
    if n_gauss < 1:
        raise ValueError(f"n_gauss must be >= 1, got {n_gauss}")
    h, m = dist.mu.shape
    eps = rng.standard_normal((n_gauss, h, m))
    gauss = np.clip(dist.mu + dist.sigma * eps, -1.0, 1.0)
    if n_policy > 0:
        pi_seq = policy_rollout(wm, theta, z0, h)
        uniq = np.concatenate([gauss, pi_seq[None]], axis=0)
        g_uniq = evaluate_returns(wm, theta, z0, uniq, gamma)
        actions = np.concatenate([gauss, np.repeat(pi_seq[None], n_policy, axis=0)])
        returns = np.concatenate([g_uniq[:n_gauss],
                                  np.full(n_policy, g_uniq[n_gauss])])
    else:
        actions = gauss
        returns = evaluate_returns(wm, theta, z0, gauss, gamma)
    return actions, returns


def _elite_weights(returns, tau: float, mode: str = "exp"):
    """Unnormalized MPPI weights over elite returns; max return gets weight 1
    in exp mode. Linear mode shifts tau*(G - G*) up to be nonnegative."""
    g_star = returns.max()
    if mode == "exp":
        w = np.exp(tau * (returns - g_star))
    elif mode == "linear":
        raw = tau * (returns - g_star)
        w = raw - raw.min()
        if w.sum() == 0.0:
            w = np.ones_like(returns)
    else:
        raise ValueError(f"unknown weight mode {mode!r}")
    return w


def refit_distribution(elite_actions, elite_returns, tau: float, eps_floor: float,
                       weight_mode: str = "exp") -> PlanDistribution:
    """Weighted Gaussian refit over the elite set.

    mu is the weight-averaged action sequence; sigma the weighted std floored
    at eps_floor elementwise.
    """
    elite_actions = np.asarray(elite_actions, dtype=np.float64)
    elite_returns = np.asarray(elite_returns, dtype=np.float64)
    if elite_actions.shape[0] < 1:
        raise ValueError("refit needs at least one elite")
    w = _elite_weights(elite_returns, tau, weight_mode)
    w = w / w.sum()
    mu = np.einsum("n,nhm->hm", w, elite_actions)
    var = np.einsum("n,nhm->hm", w, (elite_actions - mu) ** 2)
    sigma = np.maximum(np.sqrt(var), eps_floor)
    return PlanDistribution(mu=mu, sigma=sigma)


def shift_warm_start(mu: np.ndarray) -> np.ndarray:
    """Drop the consumed first step; duplicate the final row to keep length H."""
    return np.concatenate([mu[1:], mu[-1:]], axis=0)


class Planner:
    """Stateful wrapper holding the warm-start mean between environment steps."""

    def __init__(self, wm: WorldModel, hp, rng: np.random.Generator):
        self.wm = wm
        self.hp = hp
        self.rng = rng
        self.warm_mu = None

    def reset(self):
        self.warm_mu = None

    def act(self, theta: ToldParams, obs, step: int, eval_mode: bool = False):
        z = self.wm.encode(theta, obs)
        action, self.warm_mu = plan(self.wm, theta, z, self.warm_mu, self.hp,
                                    self.rng, step, eval_mode=eval_mode)
        return action


def plan(wm: WorldModel, theta: ToldParams, z, warm_mu, hp,
         rng: np.random.Generator, step: int, eval_mode: bool = False):
    """One full MPPI solve from latent z. Returns (first action, final mu
    ready to warm-start the next call: already shifted).

    hp fields used: horizon, gamma, tau, sigma_init, eps_schedule, plan_j,
    n_gauss, n_policy, top_k, std_returns, weight_mode.
    """
    h, m = hp.horizon, wm.action_dim
    mu = np.zeros((h, m)) if warm_mu is None else np.array(warm_mu, dtype=np.float64)
    sigma = np.full((h, m), hp.sigma_init)
    eps = hp.eps_schedule[1] if eval_mode else epsilon_at(step, hp.eps_schedule)

    elite_a = mu[None]
    elite_g = np.zeros(1)
    for _ in range(hp.plan_j):
        dist = PlanDistribution(mu=mu, sigma=sigma)
        actions, returns = sample_candidates(dist, wm, theta, z, hp.n_gauss,
                                             hp.n_policy, hp.gamma, rng)
        k = min(hp.top_k, actions.shape[0])
        order = np.argsort(returns)[::-1][:k]
        elite_a, elite_g = actions[order], returns[order]
        tau = hp.tau
        if hp.std_returns:
            tau = tau / max(float(elite_g.std()), 1e-8)
        dist = refit_distribution(elite_a, elite_g, tau, eps, hp.weight_mode)
        mu, sigma = dist.mu, dist.sigma

    tau = hp.tau
    if hp.std_returns:
        tau = tau / max(float(elite_g.std()), 1e-8)
    w = _elite_weights(elite_g, tau, hp.weight_mode)
    if eval_mode:
        pick = 0  # elites sorted descending: greedy
    else:
        pick = int(rng.choice(elite_a.shape[0], p=w / w.sum()))
    action = np.clip(elite_a[pick, 0], -1.0, 1.0)
    return action, shift_warm_start(mu)
