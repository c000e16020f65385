"""Composite Simpson quadrature on the unit interval."""

import numpy as np

from ..errors import ArgumentError


def simpson_nodes_weights(n_nodes: int):
    """Composite Simpson 1/3 rule on [0, 1] with ``n_nodes`` (odd, >= 3) points."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ArgumentError(f"Simpson rule needs an odd node count >= 3, got {n_nodes}")
    nodes = np.linspace(0.0, 1.0, n_nodes)
    weights = np.ones(n_nodes)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return nodes, weights / (3.0 * (n_nodes - 1))
