"""Moment maps theta (next mean) and zeta (next covariance) as functions of rho."""

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Tuple

import numpy as np

from ..errors import ArgumentError
from ..gp.sparse_gp import SparseGpModel
from ..propagation.belief import NominalModel
from ..propagation.recursion import PROPAGATION_MODES, default_selector, step_maps
from .scheduling import vec

MapValues = Tuple[np.ndarray, Optional[np.ndarray]]


class StepMaps(Protocol):
    """Anything the factorization can differentiate.

    ``evaluate`` takes stacked ``mu_x`` (..., n_x), ``u`` (..., n_u) and
    ``sigma_x`` (..., n_x, n_x), possibly complex, and returns theta (..., n_x)
    and column-major vec zeta (..., n_x**2), or None when ``with_zeta`` is False.
    """

    n_x: int
    n_u: int

    def evaluate(self, mu_x, u, sigma_x, with_zeta: bool = True) -> MapValues: ...


@dataclass(frozen=True)
class MomentMaps:
    """theta and zeta of the GP-augmented recursion for one model configuration."""

    nominal: NominalModel
    gp: Optional[SparseGpModel]
    mode: str = "mm"
    scale: float = 1.0
    selector: Optional[np.ndarray] = None
    taylor_cross: str = "taylor"

    def __post_init__(self):
        if self.mode not in PROPAGATION_MODES:
            raise ArgumentError(f"unknown propagation mode {self.mode!r}, expected one of {PROPAGATION_MODES}")
        selector = self.selector if self.selector is not None else default_selector(self.nominal, self.gp)
        if self.gp is not None:
            selector = np.asarray(selector, dtype=float)
            if selector.shape != (self.nominal.n_x, self.gp.n_outputs):
                raise ArgumentError(
                    f"selector must be ({self.nominal.n_x}, {self.gp.n_outputs}), got {selector.shape}"
                )
        object.__setattr__(self, "selector", selector)

    @property
    def n_x(self) -> int:
        return self.nominal.n_x

    @property
    def n_u(self) -> int:
        return self.nominal.n_u

    @property
    def n_rho(self) -> int:
        return self.n_x + self.n_u + self.n_x**2

    def evaluate(self, mu_x, u, sigma_x, with_zeta: bool = True) -> MapValues:
        mean, cov = step_maps(
            self.nominal,
            self.gp,
            mu_x,
            u,
            sigma_x,
            self.mode,
            self.scale,
            self.selector,
            self.taylor_cross,
            with_cov=with_zeta,
        )
        return mean, (vec(cov) if with_zeta else None)


@dataclass(frozen=True)
class FunctionMaps:
    """theta/zeta given as plain callables of (mu_x, u, sigma_x).

    Both callables must broadcast over leading axes and accept complex input.
    ``zeta`` returns a matrix (..., n_x, n_x); None means a zero covariance map.
    """

    theta: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    zeta: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]
    n_x: int
    n_u: int

    @property
    def n_rho(self) -> int:
        return self.n_x + self.n_u + self.n_x**2

    def evaluate(self, mu_x, u, sigma_x, with_zeta: bool = True) -> MapValues:
        mu_x, u, sigma_x = np.asarray(mu_x), np.asarray(u), np.asarray(sigma_x)
        theta = np.asarray(self.theta(mu_x, u, sigma_x))
        if not with_zeta:
            return theta, None
        if self.zeta is None:
            return theta, np.zeros(theta.shape[:-1] + (self.n_x**2,), dtype=theta.dtype)
        return theta, vec(self.zeta(mu_x, u, sigma_x))
