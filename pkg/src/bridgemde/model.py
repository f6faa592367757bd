"""Parametric model, time grid, integration measure and built-in test models.

Model functions follow one calling convention:

* ``V(theta, t, x)`` takes scalars ``t`` and ``x`` and returns a float.
* ``K(theta, t, s, x)`` takes a scalar ``t`` and 1-D arrays ``s`` (past times)
  and ``x`` (past states) of equal length and returns an array of that
  length. ``K=None`` means the kernel is identically zero.
* ``V_x`` and ``K_x`` are the partial derivatives in the state argument,
  with the same signatures as ``V`` and ``K``.

``theta`` is always a 1-D float array. When every supplied function is a
numba-compiled dispatcher the integrators run in compiled code.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import InvalidArgument, NotFound

__all__ = [
    "TimeGrid",
    "Measure",
    "ModelSpec",
    "BuiltinModel",
    "build_time_grid",
    "lebesgue_measure",
    "custom_measure",
    "builtin",
    "builtin_names",
    "register",
]


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``."""

    T: float
    n_steps: int
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def size(self) -> int:
        return self.n_steps + 1

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.T == other.T and self.n_steps == other.n_steps

    def __hash__(self):
        return hash((self.T, self.n_steps))


def build_time_grid(T: float, n_steps: int) -> TimeGrid:
    """Equally spaced grid on ``[0, T]`` with ``n_steps`` intervals."""
    if not np.isfinite(T) or T <= 0:
        raise InvalidArgument(f"horizon T must be positive, got {T}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise InvalidArgument(f"n_steps must be an integer >= 2, got {n_steps}")
    n_steps = int(n_steps)
    points = np.linspace(0.0, float(T), n_steps + 1)
    return TimeGrid(float(T), n_steps, _frozen_array(points))


@dataclass(frozen=True)
class Measure:
    """Quadrature weights representing a finite measure on the grid nodes."""

    weights: np.ndarray
    grid: TimeGrid

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def lebesgue_measure(grid: TimeGrid) -> Measure:
    """Trapezoid weights for Lebesgue measure on ``[0, T]``."""
    w = np.full(grid.size, grid.dt)
    w[0] = w[-1] = grid.dt / 2.0
    return Measure(_frozen_array(w), grid)


def custom_measure(grid: TimeGrid, weights) -> Measure:
    """Wrap user-supplied nonnegative node weights as a :class:`Measure`."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (grid.size,):
        raise InvalidArgument(
            f"expected {grid.size} weights for this grid, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgument("measure weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise InvalidArgument("measure must have positive total mass")
    return Measure(_frozen_array(w), grid)


@dataclass(frozen=True)
class ModelSpec:
    """Drift ``S_t(theta, X) = V(theta, t, X_t) + int_0^t K(theta, t, s, X_s) ds``.

    Parameters
    ----------
    dim_theta : int
        Number of parameters ``p``.
    V, K : callable
        Drift components, see the module docstring. ``K`` may be None.
    x0 : float
        Initial state.
    T : float
        Horizon.
    theta_box : sequence of (lower, upper)
        Closed box for the parameter space.
    V_x, K_x : callable, optional
        State derivatives. A central difference with step
        ``1e-6 * max(1, |x|)`` is used when absent.
    """

    dim_theta: int
    V: Callable
    K: Optional[Callable]
    x0: float
    T: float
    theta_box: tuple
    V_x: Optional[Callable] = None
    K_x: Optional[Callable] = None

    def __post_init__(self):
        if int(self.dim_theta) != self.dim_theta or self.dim_theta < 1:
            raise InvalidArgument("dim_theta must be a positive integer")
        box = np.asarray(self.theta_box, dtype=float)
        if box.shape != (self.dim_theta, 2):
            raise InvalidArgument(
                f"theta_box must have shape ({self.dim_theta}, 2), got {box.shape}")
        if np.any(box[:, 0] > box[:, 1]) or not np.all(np.isfinite(box)):
            raise InvalidArgument("theta_box needs finite bounds with lower <= upper")
        if not np.isfinite(self.T) or self.T <= 0:
            raise InvalidArgument("horizon T must be positive")
        object.__setattr__(self, "theta_box", tuple(map(tuple, box.tolist())))

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.theta_box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.theta_box])

    @property
    def has_kernel(self) -> bool:
        return self.K is not None

    def check_theta(self, theta) -> np.ndarray:
        """Return ``theta`` as a float array, raising if it leaves the box."""
        th = np.asarray(theta, dtype=float).reshape(-1)
        if th.shape != (self.dim_theta,):
            raise InvalidArgument(
                f"theta must have length {self.dim_theta}, got {th.size}")
        if np.any(th < self.lower) or np.any(th > self.upper):
            raise InvalidArgument(f"theta={th.tolist()} outside theta_box {self.theta_box}")
        return th


@dataclass(frozen=True)
class BuiltinModel:
    """Registered model, optionally with closed forms for ``x_t`` and its gradient.

    ``closed_x(theta, t)`` returns an array shaped like ``t``;
    ``closed_dx(theta, t)`` returns a ``(p, len(t))`` array.
    """

    name: str
    spec: ModelSpec
    closed_x: Optional[Callable] = None
    closed_dx: Optional[Callable] = None

    @property
    def has_closed_form(self) -> bool:
        return self.closed_x is not None


_REGISTRY: dict[str, BuiltinModel] = {}


def register(model: BuiltinModel) -> BuiltinModel:
    if model.name in _REGISTRY:
        raise InvalidArgument(f"model name {model.name!r} already registered")
    _REGISTRY[model.name] = model
    return model


def builtin(name: str) -> BuiltinModel:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise NotFound(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None


def builtin_names() -> list[str]:
    return sorted(_REGISTRY)


# --- built-in models -------------------------------------------------------

@njit(cache=True)
def _cm1_V(theta, t, x):
    return theta[0]


@njit(cache=True)
def _zero_V(theta, t, x):
    return 0.0


@njit(cache=True)
def _lm1_V(theta, t, x):
    return theta[0] * x


@njit(cache=True)
def _lm1_Vx(theta, t, x):
    return theta[0]


@njit(cache=True)
def _sm1_V(theta, t, x):
    return theta[0] + theta[1] * t


@njit(cache=True)
def _km1_V(theta, t, x):
    return -theta[0] * x


@njit(cache=True)
def _km1_Vx(theta, t, x):
    return -theta[0]


@njit(cache=True)
def _km1_K(theta, t, s, x):
    return theta[1] * x


@njit(cache=True)
def _km1_Kx(theta, t, s, x):
    return theta[1] * np.ones_like(x)


register(BuiltinModel(
    "CM1",
    ModelSpec(1, _cm1_V, None, 0.0, 1.0, ((-2.0, 2.0),), V_x=_zero_V),
    closed_x=lambda th, t: th[0] * np.asarray(t, dtype=float),
    closed_dx=lambda th, t: np.asarray(t, dtype=float)[None, :],
))

register(BuiltinModel(
    "LM1",
    ModelSpec(1, _lm1_V, None, 1.0, 1.0, ((-2.0, 2.0),), V_x=_lm1_Vx),
    closed_x=lambda th, t: np.exp(th[0] * np.asarray(t, dtype=float)),
    closed_dx=lambda th, t: (np.asarray(t, dtype=float)
                             * np.exp(th[0] * np.asarray(t, dtype=float)))[None, :],
))

register(BuiltinModel(
    "SM1",
    ModelSpec(2, _sm1_V, None, 0.0, 1.0, ((-5.0, 5.0), (-5.0, 5.0)), V_x=_zero_V),
    closed_x=lambda th, t: th[0] * np.asarray(t, dtype=float)
    + th[1] * np.asarray(t, dtype=float) ** 2 / 2.0,
    closed_dx=lambda th, t: np.vstack([np.asarray(t, dtype=float),
                                       np.asarray(t, dtype=float) ** 2 / 2.0]),
))

register(BuiltinModel(
    "KM1",
    ModelSpec(2, _km1_V, _km1_K, 1.0, 1.0, ((-3.0, 3.0), (-3.0, 3.0)),
              V_x=_km1_Vx, K_x=_km1_Kx),
))
