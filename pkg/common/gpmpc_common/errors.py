"""Exception hierarchy shared by the library and the CLI."""

from typing import Any, Optional


class GpMpcError(Exception):
    """Base class for every error raised by gpmpc_common."""


class ArgumentError(GpMpcError, ValueError):
    """Bad argument: wrong dimension, non-finite value, out-of-domain input."""


class NumericalError(GpMpcError, ArithmeticError):
    """A numerical routine failed.

    Attributes:
        jitter: Largest diagonal jitter tried before giving up, if any.
        node: Quadrature coordinate (lambda in [0, 1]) where evaluation failed.
    """

    def __init__(self, message: str, *, jitter: Optional[float] = None, node: Optional[float] = None):
        super().__init__(message)
        self.jitter = jitter
        self.node = node


class InfeasibleTighteningError(NumericalError):
    """Tightened state half-spaces leave an empty set at some prediction step."""

    def __init__(self, message: str, *, step: int, halfspace: int):
        super().__init__(message)
        self.step = step
        self.halfspace = halfspace


class ConfigError(GpMpcError):
    """Configuration file missing, unreadable, or invalid."""


class SimulationAbortedError(GpMpcError):
    """Closed-loop simulation stopped early.

    Attributes:
        log: Partial trajectory log up to the abort.
        reason: Short machine-readable reason (``nan_state``,
            ``attitude_singularity``, ``controller_error``).
    """

    def __init__(self, message: str, *, log: Any, reason: str):
        super().__init__(message)
        self.log = log
        self.reason = reason
