"""Prioritized episode replay: a sum tree over per-slice priorities and
episode-chunked storage sampling contiguous length-(H+1) windows.

Transitions are stored grouped by episode so each observation is kept once
(images quantized to 8 bits). Every transition's tree leaf starts at the
current max priority; eligibility as a slice start (the whole window must sit
inside one episode) is enforced by rejection at sampling time, which leaves
the conditional distribution proportional to priority^alpha as required.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class TrajectorySlice:
    observations: np.ndarray  # (H+1, *obs_shape)
    actions: np.ndarray       # (H, m)
    rewards: np.ndarray       # (H,)
    dones: np.ndarray         # (H,) bool


class SumTree:
    """Fixed-capacity binary indexed sum tree (capacity rounded up to 2^n)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = 1 << (capacity - 1).bit_length()
        self.nodes = np.zeros(2 * self.capacity)

    def set(self, idx: int, value: float):
        if not 0 <= idx < self.capacity:
            raise IndexError(f"leaf index {idx} out of range 0..{self.capacity - 1}")
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"leaf value must be finite and nonnegative, got {value}")
        i = self.capacity + idx
        delta = value - self.nodes[i]
        while i >= 1:
            self.nodes[i] += delta
            i >>= 1

    def get(self, idx: int) -> float:
        return float(self.nodes[self.capacity + idx])

    def total(self) -> float:
        return float(self.nodes[1])

    def find_prefix(self, mass):
        """Leaf indices whose cumulative range contains each mass (vectorized)."""
        mass = np.atleast_1d(np.asarray(mass, dtype=np.float64)).copy()
        idx = np.ones(mass.shape, dtype=np.int64)
        for _ in range(self.capacity.bit_length() - 1):
            left = idx << 1
            go_right = mass >= self.nodes[left]
            mass -= self.nodes[left] * go_right
            idx = left + go_right
        return idx - self.capacity


class _Episode:
    __slots__ = ("start_id", "obs", "actions", "rewards", "dones", "closed")

    def __init__(self, start_id: int, first_obs):
        self.start_id = start_id
        self.obs = [first_obs]
        self.actions = []
        self.rewards = []
        self.dones = []
        self.closed = False

    def __len__(self):
        return len(self.actions)


class ReplayBuffer:
    """Episode storage plus priority tree keyed by global transition id."""

    def __init__(self, capacity: int, alpha: float = 0.6, beta: float = 0.4,
                 eps_prio: float = 1e-6, quantize_images: bool = True):
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.eps_prio = float(eps_prio)
        self.quantize_images = quantize_images
        self.tree = SumTree(self.capacity)
        self.episodes: list[_Episode] = []
        self._starts: list[int] = []  # episode start ids, parallel to episodes
        self.next_id = 0
        self.size = 0
        self.max_leaf = 1.0

    def __len__(self):
        return self.size

    # -- writing -----------------------------------------------------------

    def _pack(self, obs):
        obs = np.asarray(obs)
        if self.quantize_images and obs.ndim == 3:
            return np.round(obs * 255.0).astype(np.uint8)
        return np.asarray(obs, dtype=np.float64)

    @staticmethod
    def _unpack(obs):
        if obs.dtype == np.uint8:
            return obs.astype(np.float64) / 255.0
        return obs

    def push(self, tr: Transition):
        """Append one step; opens a fresh episode after a done flag."""
        if not np.isfinite(tr.r):
            raise ValueError(f"non-finite reward {tr.r}")
        ep = self.episodes[-1] if self.episodes and not self.episodes[-1].closed else None
        if ep is None:
            ep = _Episode(self.next_id, self._pack(tr.s))
            self.episodes.append(ep)
            self._starts.append(ep.start_id)
        elif ep.obs[0].shape != np.asarray(tr.s).shape:
            raise ValueError(f"observation shape {np.asarray(tr.s).shape} does not "
                             f"match episode shape {ep.obs[0].shape}")
        ep.obs.append(self._pack(tr.s_next))
        ep.actions.append(np.asarray(tr.a, dtype=np.float64))
        ep.rewards.append(float(tr.r))
        ep.dones.append(bool(tr.done))
        if tr.done:
            ep.closed = True
        gid = self.next_id
        self.next_id += 1
        self.size += 1
        # evict before claiming the leaf slot: the new id may reuse the slot
        # of an id being evicted (they sit exactly one capacity apart)
        self._evict()
        self.tree.set(gid % self.tree.capacity, self.max_leaf)

    def _evict(self):
        while self.size > self.capacity:
            if not self.episodes[0].closed:
                raise RuntimeError(
                    "open episode exceeds buffer capacity; raise capacity or "
                    "shorten episodes")
            old = self.episodes.pop(0)
            self._starts.pop(0)
            for g in range(old.start_id, old.start_id + len(old)):
                self.tree.set(g % self.tree.capacity, 0.0)
            self.size -= len(old)

    # -- sampling ----------------------------------------------------------

    def _episode_of(self, global_id: int) -> _Episode:
        k = bisect_right(self._starts, global_id) - 1
        return self.episodes[k]

    def _eligible(self, global_id: int, h: int) -> bool:
        if not self.episodes or global_id < self._starts[0]:
            return False  # evicted
        ep = self._episode_of(global_id)
        return (global_id - ep.start_id) + h <= len(ep)

    def any_eligible(self, h: int) -> bool:
        return any(len(ep) >= h for ep in self.episodes)

    def _draw_starts(self, batch: int, h: int, rng: np.random.Generator):
        if not self.any_eligible(h):
            raise RuntimeError(
                f"no stored episode holds a full horizon-{h} slice yet; "
                "seed the buffer with more steps first")
        ids = np.empty(batch, dtype=np.int64)
        filled = 0
        base = (self.next_id // self.tree.capacity) * self.tree.capacity
        for _ in range(10_000):
            need = batch - filled
            mass = rng.random(need) * self.tree.total()
            leaves = self.tree.find_prefix(mass)
            # map leaf slot back to the live global id occupying it
            gid = base + leaves
            gid[gid >= self.next_id] -= self.tree.capacity
            ok = np.fromiter((g >= 0 and self._eligible(int(g), h) for g in gid),
                             dtype=bool, count=need)
            take = gid[ok]
            ids[filled:filled + take.size] = take
            filled += take.size
            if filled == batch:
                return ids
        raise RuntimeError("sampling rejection loop exhausted; buffer is "
                           "dominated by ineligible slice starts")

    def _slice_at(self, global_id: int, h: int) -> TrajectorySlice:
        ep = self._episode_of(global_id)
        j = global_id - ep.start_id
        obs = np.stack([self._unpack(o) for o in ep.obs[j:j + h + 1]])
        return TrajectorySlice(
            observations=obs,
            actions=np.stack(ep.actions[j:j + h]),
            rewards=np.asarray(ep.rewards[j:j + h], dtype=np.float64),
            dones=np.asarray(ep.dones[j:j + h], dtype=bool),
        )

    def _weights(self, ids: np.ndarray) -> np.ndarray:
        leaves = np.array([self.tree.get(int(g) % self.tree.capacity) for g in ids])
        p = leaves / self.tree.total()
        w = (self.size * p) ** (-self.beta)
        return w / w.max()

    def sample_slices(self, batch: int, h: int, rng: np.random.Generator):
        """[(TrajectorySlice, global start id, importance weight)] of length batch."""
        ids = self._draw_starts(batch, h, rng)
        weights = self._weights(ids)
        return [(self._slice_at(int(g), h), int(g), float(w))
                for g, w in zip(ids, weights)]

    def sample_stacked(self, batch: int, h: int, rng: np.random.Generator):
        """Time-major arrays for the trainer: (obs (H+1,B,...), actions (H,B,m),
        rewards (H,B), weights (B,), start ids (B,))."""
        ids = self._draw_starts(batch, h, rng)
        weights = self._weights(ids)
        slices = [self._slice_at(int(g), h) for g in ids]
        obs = np.stack([s.observations for s in slices], axis=1)
        actions = np.stack([s.actions for s in slices], axis=1)
        rewards = np.stack([s.rewards for s in slices], axis=1)
        return obs, actions, rewards, weights, ids

    # -- priorities ----------------------------------------------------------

    def update_priorities(self, ids, priorities):
        """Replace the slice-start leaves with (|p| + eps)^alpha."""
        for g, p in zip(np.atleast_1d(ids), np.atleast_1d(priorities)):
            p = float(p)
            if p < 0 or not np.isfinite(p):
                raise ValueError(f"priority must be finite and nonnegative, got {p}")
            leaf = (abs(p) + self.eps_prio) ** self.alpha
            self.tree.set(int(g) % self.tree.capacity, leaf)
            if leaf > self.max_leaf:
                self.max_leaf = leaf
