"""L2(mu) norm and distance for trajectories sharing a grid."""
from __future__ import annotations

import math

import numpy as np

from .dynamics import Trajectory
from .errors import InvalidArgument
from .model import Measure

__all__ = ["l2_norm", "l2_distance", "l2_norm_values"]


def l2_norm_values(values: np.ndarray, mu: Measure) -> float:
    """``sqrt(sum_k w_k f_k^2)`` for raw node values."""
    if values.shape != mu.weights.shape:
        raise InvalidArgument(
            f"{values.shape[0]} values for a measure on {mu.weights.shape[0]} nodes")
    return math.sqrt(float(np.dot(mu.weights, values * values)))


def l2_norm(f: Trajectory, mu: Measure) -> float:
    if f.grid != mu.grid:
        raise InvalidArgument("trajectory and measure live on different grids")
    return l2_norm_values(f.values, mu)


def l2_distance(f: Trajectory, g: Trajectory, mu: Measure) -> float:
    if f.grid != g.grid:
        raise InvalidArgument("trajectories live on different grids")
    if f.grid != mu.grid:
        raise InvalidArgument("trajectory and measure live on different grids")
    return l2_norm_values(f.values - g.values, mu)
