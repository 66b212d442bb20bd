"""TD-MPC with a self-supervised reconstruction head.

Latent world model (TOLD) trained by temporal-difference learning with an
auxiliary state decoder, MPPI planning over the learned model, prioritized
experience replay, and built-in dense/sparse pendulum and reacher tasks in
both state and image observation modes.
"""

__version__ = "0.1.0"
