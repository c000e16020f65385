"""Inner body-rate PID of the cascaded flight stack."""

from dataclasses import dataclass, field

import numpy as np

from .params import QuadParams


@dataclass
class RatePidState:
    """Integral torque and last error, per axis."""

    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def reset(self) -> None:
        self.integral = np.zeros(3)
        self.prev_error = np.zeros(3)


def inner_rate_pid(rate_ref, rate_meas, state: RatePidState, params: QuadParams) -> np.ndarray:
    """Body torque for one PID tick of length ``1 / pid_rate_hz``.

    The integral term is accumulated as torque and clamped to
    ``rate_integral_limit`` (anti-windup). ``state`` is updated in place.
    """
    dt = 1.0 / params.pid_rate_hz
    error = np.asarray(rate_ref, dtype=float) - np.asarray(rate_meas, dtype=float)
    limit = np.asarray(params.rate_integral_limit)
    state.integral = np.clip(state.integral + np.asarray(params.rate_ki) * error * dt, -limit, limit)
    derivative = (error - state.prev_error) / dt
    state.prev_error = error
    return np.asarray(params.rate_kp) * error + state.integral + np.asarray(params.rate_kd) * derivative
