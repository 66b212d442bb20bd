"""Built-in desk-scale control tasks: pendulum swingup (dense and sparse
reward) and a 2-D point reacher, each in state-vector or rendered-image
observation mode.

Angles are measured from upright (theta = 0 is the balanced position) and
wrapped to (-pi, pi]. Physics uses semi-implicit Euler at dt = 0.05.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENV_NAMES = ("pendulum_swingup", "pendulum_swingup_sparse", "point_reacher")

DT = 0.05
GRAVITY = 10.0
ROD_LEN = 1.0
ROD_MASS = 1.0
DAMPING = 0.05
TORQUE = 2.0
MAX_SPEED = 8.0
SPARSE_ANGLE = 0.15

REACHER_ACCEL = 4.0
REACHER_DRAG = 0.05


@dataclass
class EnvSpec:
    name: str = "pendulum_swingup"
    obs_mode: str = "state"
    image_resolution: int = 32
    frame_stack: int = 3
    episode_length: int = 200
    action_repeat: int = 1

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise ValueError(f"unknown environment {self.name!r}; expected one of {ENV_NAMES}")
        if self.obs_mode not in ("state", "image"):
            raise ValueError(f"obs_mode must be 'state' or 'image', got {self.obs_mode!r}")
        if self.obs_mode == "image" and (self.image_resolution < 16
                                         or self.image_resolution % 16):
            raise ValueError(f"image_resolution must be a multiple of 16 and >= 16, "
                             f"got {self.image_resolution}")
        if self.episode_length < 2:
            raise ValueError("episode_length must be at least 2")
        if self.action_repeat < 1:
            raise ValueError("action_repeat must be at least 1")

    @property
    def action_dim(self) -> int:
        return 2 if self.name == "point_reacher" else 1

    @property
    def state_dim(self) -> int:
        return 6 if self.name == "point_reacher" else 3

    @property
    def obs_shape(self) -> tuple:
        if self.obs_mode == "image":
            return (self.frame_stack, self.image_resolution, self.image_resolution)
        return (self.state_dim,)


@dataclass
class PendulumState:
    theta: float
    theta_dot: float
    step_count: int = 0


@dataclass
class ReacherState:
    pos: np.ndarray
    vel: np.ndarray
    goal: np.ndarray
    step_count: int = 0


def wrap_angle(theta: float) -> float:
    return float(np.arctan2(np.sin(theta), np.cos(theta)))


def pendulum_step(theta: float, theta_dot: float, a: float, damping: float = DAMPING):
    """One semi-implicit Euler step of the actuated pendulum ODE."""
    acc = (GRAVITY / ROD_LEN) * np.sin(theta) \
        + (TORQUE * a - damping * theta_dot) / (ROD_MASS * ROD_LEN ** 2)
    theta_dot = float(np.clip(theta_dot + DT * acc, -MAX_SPEED, MAX_SPEED))
    theta = wrap_angle(theta + DT * theta_dot)
    return theta, theta_dot


def pendulum_energy(theta: float, theta_dot: float) -> float:
    """Kinetic plus gravitational potential energy (pivot as reference)."""
    return 0.5 * ROD_MASS * ROD_LEN ** 2 * theta_dot ** 2 \
        + ROD_MASS * GRAVITY * ROD_LEN * float(np.cos(theta))


def pendulum_reward(theta: float, theta_dot: float, a: float, sparse: bool) -> float:
    if sparse:
        return 1.0 if abs(wrap_angle(theta)) < SPARSE_ANGLE else 0.0
    return -(wrap_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * a ** 2)


def reacher_step(pos, vel, a):
    vel = (1.0 - REACHER_DRAG) * vel + DT * REACHER_ACCEL * a
    pos = np.clip(pos + DT * vel, -1.0, 1.0)
    return pos, vel


class Env:
    """One environment instance; owns its RNG stream and frame history."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.state = None
        self._frames = None

    @property
    def observation_shape(self) -> tuple:
        return self.spec.obs_shape

    @property
    def action_dim(self) -> int:
        return self.spec.action_dim

    def reset(self):
        if self.spec.name == "point_reacher":
            self.state = ReacherState(pos=np.zeros(2), vel=np.zeros(2),
                                      goal=self.rng.uniform(-1.0, 1.0, 2))
        else:
            self.state = PendulumState(theta=float(self.rng.uniform(-np.pi, np.pi)),
                                       theta_dot=float(self.rng.uniform(-1.0, 1.0)))
        if self.spec.obs_mode == "image":
            frame = self._render_frame()
            self._frames = [frame.copy() for _ in range(self.spec.frame_stack)]
        return self._observation()

    def step(self, a):
        a = np.asarray(a, dtype=np.float64).reshape(self.spec.action_dim)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite action {a}")
        a = np.clip(a, -1.0, 1.0)
        reward = 0.0
        for _ in range(self.spec.action_repeat):
            reward += self._physics_step(a)
        self.state.step_count += 1
        done = self.state.step_count >= self.spec.episode_length
        if self.spec.obs_mode == "image":
            self._frames.pop(0)
            self._frames.append(self._render_frame())
        return self._observation(), float(reward), bool(done)

    def _physics_step(self, a) -> float:
        """Advance one dt; the reward is evaluated on the pre-step state."""
        s = self.state
        if isinstance(s, PendulumState):
            sparse = self.spec.name == "pendulum_swingup_sparse"
            reward = pendulum_reward(s.theta, s.theta_dot, float(a[0]), sparse)
            s.theta, s.theta_dot = pendulum_step(s.theta, s.theta_dot, float(a[0]))
        else:
            reward = -float(np.linalg.norm(s.pos - s.goal))
            s.pos, s.vel = reacher_step(s.pos, s.vel, a)
        return reward

    # -- observations --------------------------------------------------------

    def _observation(self):
        if self.spec.obs_mode == "image":
            return np.stack(self._frames)
        s = self.state
        if isinstance(s, PendulumState):
            return np.array([np.cos(s.theta), np.sin(s.theta), s.theta_dot])
        return np.concatenate([s.pos, s.goal, s.vel])

    def _render_frame(self):
        s = self.state
        if isinstance(s, PendulumState):
            return render_pendulum(s.theta, self.spec.image_resolution)
        return render_reacher(s.pos, s.goal, self.spec.image_resolution)


# ---------------------------------------------------------------------------
# rasterization (grayscale, values in [0,1], antialiased by distance fields)


def _pixel_grid(r: int):
    # pixel-center coordinates; x rightward, y downward
    c = np.arange(r) + 0.5
    return np.meshgrid(c, c)  # (x, y) each (r, r)


def rod_tip(theta: float, r: int):
    """Pixel coordinates of the rod tip for a pole anchored at canvas center;
    theta = 0 points straight up."""
    cx = cy = r / 2.0
    length = 0.4 * r
    return cx + length * np.sin(theta), cy - length * np.cos(theta)


def render_pendulum(theta: float, r: int):
    px, py = _pixel_grid(r)
    cx = cy = r / 2.0
    tx, ty = rod_tip(theta, r)
    dx, dy = tx - cx, ty - cy
    seg_len2 = dx * dx + dy * dy
    t = ((px - cx) * dx + (py - cy) * dy) / seg_len2
    t = np.clip(t, 0.0, 1.0)
    dist = np.hypot(px - (cx + t * dx), py - (cy + t * dy))
    width = max(0.06 * r, 1.0)
    return np.clip(width / 2.0 + 1.0 - dist, 0.0, 1.0)


def _disc(px, py, center_xy, radius: float, r: int):
    cx = (center_xy[0] + 1.0) / 2.0 * r
    cy = (1.0 - (center_xy[1] + 1.0) / 2.0) * r
    dist = np.hypot(px - cx, py - cy)
    return np.clip(radius + 1.0 - dist, 0.0, 1.0)


def render_reacher(pos, goal, r: int):
    px, py = _pixel_grid(r)
    frame = 0.45 * _disc(px, py, goal, 0.09 * r, r)
    agent = _disc(px, py, pos, 0.06 * r, r)
    return np.clip(np.maximum(frame, agent), 0.0, 1.0)


def shift_augment(image, rng: np.random.Generator, max_shift: int = 4):
    """Random integer translation with edge replication; all stacked frames
    move together. The caller keeps the original for reconstruction targets."""
    image = np.asarray(image)
    dx, dy = rng.integers(-max_shift, max_shift + 1, size=2)
    return shift_image(image, int(dx), int(dy))


def shift_image(image, dx: int, dy: int):
    """Translate by (dx right, dy down) with edge replication."""
    if dx == 0 and dy == 0:
        return image.copy()
    r = image.shape[-1]
    pad = np.pad(image, [(0, 0)] * (image.ndim - 2) + [(abs(dy), abs(dy)), (abs(dx), abs(dx))],
                 mode="edge")
    y0 = abs(dy) - dy
    x0 = abs(dx) - dx
    return pad[..., y0:y0 + r, x0:x0 + r].copy()
