"""Reference trajectories for the outer loop.

A reference maps time to the 9-vector ``col(xi, xi_dot, 0, 0, 0)``; the
velocity part is the analytic derivative of the position, so the controller
gets velocity feed-forward for free.
"""

import math
from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from ..errors import ArgumentError


class Reference(ABC):
    """Position and velocity as functions of time (seconds)."""

    name: str = "reference"

    @abstractmethod
    def position_velocity(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """Both (..., 3) for time array ``t`` of shape (...)."""

    def state(self, t) -> np.ndarray:
        """Reference outer state(s), shape (..., 9), zero attitude."""
        pos, vel = self.position_velocity(t)
        return np.concatenate([pos, vel, np.zeros(pos.shape[:-1] + (3,))], axis=-1)


class HoverReference(Reference):
    name = "hover"

    def __init__(self, position=(0.0, 0.0, 1.0)):
        self.position = np.asarray(position, dtype=float)

    def position_velocity(self, t):
        shape = np.shape(t)
        return np.broadcast_to(self.position, shape + (3,)).copy(), np.zeros(shape + (3,))


class LemniscateReference(Reference):
    """Figure eight at 1.2 m altitude with a small vertical ripple."""

    name = "lemniscate"

    def __init__(self, amplitude: float = 1.2, height: float = 1.2, ripple: float = 0.02,
                 omega_1: float = 1.3 * math.sqrt(2.0), omega_2: float = 0.77 * math.sqrt(2.0)):
        self.amplitude = amplitude
        self.height = height
        self.ripple = ripple
        self.omega_1 = omega_1
        self.omega_2 = omega_2

    def position_velocity(self, t):
        t = np.asarray(t, dtype=float)
        a, w1, w2 = self.amplitude, self.omega_1, self.omega_2
        s1, c1 = np.sin(w1 * t), np.cos(w1 * t)
        s2, c2 = np.sin(w2 * t), np.cos(w2 * t)
        pos = np.stack([a * c1, a * s1 * c2, self.height + self.ripple * s1], axis=-1)
        vel = np.stack(
            [-a * w1 * s1, a * (w1 * c1 * c2 - w2 * s1 * s2), self.ripple * w1 * c1], axis=-1
        )
        return pos, vel


class RandomPolynomialReference(Reference):
    """Quintic spline through seeded random waypoints, at rest at both ends.

    Waypoints are drawn uniformly in ``[-1.25, 1.25]^2 x [0.5, 2.0]`` every
    ``segment_time`` seconds; after the last waypoint the reference holds.
    """

    name = "random_polynomial"

    def __init__(self, duration: float, seed: int, segment_time: float = 1.5,
                 lateral_half_width: float = 1.25, z_range: Tuple[float, float] = (0.5, 2.0)):
        if duration <= 0 or segment_time <= 0:
            raise ArgumentError("duration and segment_time must be positive")
        rng = np.random.default_rng(seed)
        n_points = int(math.ceil(duration / segment_time)) + 1
        low = np.array([-lateral_half_width, -lateral_half_width, z_range[0]])
        high = np.array([lateral_half_width, lateral_half_width, z_range[1]])
        self.waypoints = rng.uniform(low, high, size=(n_points, 3))
        self.times = segment_time * np.arange(n_points)
        rest = [(1, np.zeros(3)), (2, np.zeros(3))]
        self._spline = make_interp_spline(self.times, self.waypoints, k=5, bc_type=(rest, rest))
        self._velocity = self._spline.derivative(1)

    def position_velocity(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        return self._spline(t), self._velocity(t)


def reference_horizon(reference: Reference, t: float, horizon: int, T_s: float) -> np.ndarray:
    """Reference states at ``t + i T_s`` for ``i = 0..horizon``, shape (horizon + 1, 9)."""
    return reference.state(t + T_s * np.arange(horizon + 1))


def make_reference(kind: str, duration: float = 10.0, seed: int = 0) -> Reference:
    if kind == "lemniscate":
        return LemniscateReference()
    if kind == "random_polynomial":
        return RandomPolynomialReference(duration, seed)
    if kind == "hover":
        return HoverReference()
    raise ArgumentError(f"unknown reference '{kind}'")
