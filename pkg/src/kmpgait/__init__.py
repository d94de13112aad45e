"""Gait synthesis from learned quadruped trajectories via kinematic motion primitives."""

__version__ = "0.1.0"
