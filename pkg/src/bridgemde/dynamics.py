"""Solvers for the limiting system, its sensitivities, the noisy path and x^(1).

All solvers share one time-stepping routine: the explicit trapezoidal
(Heun) scheme, with the memory term ``int_0^t K(theta, t, s, x_s) ds``
evaluated by the trapezoid rule over the nodes computed so far. The noisy
path adds ``eps * dW_k`` to both stages, so ``eps = 0`` reproduces
:func:`solve_limit_ode` bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numba.core.dispatcher import Dispatcher

from .errors import InvalidArgument, NumericalBlowup
from .model import ModelSpec, TimeGrid

__all__ = [
    "Trajectory",
    "SensitivityTrajectory",
    "solve_limit_ode",
    "solve_sensitivity",
    "simulate_sde",
    "simulate_first_order",
    "simulate_first_order_batch",
    "draw_increments",
]


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.size,):
            raise InvalidArgument(
                f"trajectory has {self.values.shape} values for a grid of {self.grid.size}")

    @property
    def t(self) -> np.ndarray:
        return self.grid.points


@dataclass(frozen=True)
class SensitivityTrajectory:
    """Row ``j`` holds ``d x_t(theta) / d theta_j`` on the grid."""

    grid: TimeGrid
    rows: np.ndarray


def _build_core(jit):
    @jit
    def memory(K, theta, t, times, x, m, dt):
        if m == 0:
            return 0.0
        vals = K(theta, t, times[:m + 1], x[:m + 1])
        return dt * (vals.sum() - 0.5 * (vals[0] + vals[m]))

    @jit
    def heun(V, K, has_kernel, theta, x0, times, dt, noise):
        n = times.shape[0]
        x = np.empty(n)
        x[0] = x0
        for k in range(n - 1):
            d0 = V(theta, times[k], x[k])
            if has_kernel:
                d0 += memory(K, theta, times[k], times, x, k, dt)
            x[k + 1] = x[k] + d0 * dt + noise[k]
            d1 = V(theta, times[k + 1], x[k + 1])
            if has_kernel:
                d1 += memory(K, theta, times[k + 1], times, x, k + 1, dt)
            x[k + 1] = x[k] + 0.5 * (d0 + d1) * dt + noise[k]
            if not math.isfinite(x[k + 1]):
                return x, k + 1
        return x, -1

    return heun


_heun_py = _build_core(lambda f: f)
_heun_jit = _build_core(njit)


@njit
def _no_kernel(theta, t, s, x):
    return 0.0 * x


def _is_compiled(*funcs) -> bool:
    return all(f is None or isinstance(f, Dispatcher) for f in funcs)


def _check_grid(model: ModelSpec, grid: TimeGrid):
    if not math.isclose(grid.T, model.T, rel_tol=1e-12):
        raise InvalidArgument(f"grid horizon {grid.T} differs from model horizon {model.T}")


def _integrate(model: ModelSpec, theta: np.ndarray, grid: TimeGrid, noise: np.ndarray):
    times = np.ascontiguousarray(grid.points)
    if _is_compiled(model.V, model.K):
        kernel = model.K if model.K is not None else _no_kernel
        x, bad = _heun_jit(model.V, kernel, model.K is not None, theta,
                           float(model.x0), times, grid.dt, noise)
    else:
        x, bad = _heun_py(model.V, model.K, model.K is not None, theta,
                          float(model.x0), times, grid.dt, noise)
    if bad >= 0:
        raise NumericalBlowup(times[bad])
    return x


def solve_limit_ode(model: ModelSpec, theta, grid: TimeGrid) -> Trajectory:
    """Deterministic trajectory ``x_t(theta)`` of the noise-free system."""
    th = model.check_theta(theta)
    _check_grid(model, grid)
    x = _integrate(model, th, grid, np.zeros(grid.n_steps))
    return Trajectory(grid, x)


def solve_sensitivity(model: ModelSpec, theta, grid: TimeGrid) -> SensitivityTrajectory:
    """Central finite differences of :func:`solve_limit_ode` in each coordinate.

    The step is ``1e-5 * max(1, |theta_j|)``, shrunk to stay inside the box;
    a one-sided difference is used when ``theta_j`` sits on a bound.
    """
    th = model.check_theta(theta)
    _check_grid(model, grid)
    lo, hi = model.lower, model.upper
    rows = np.empty((model.dim_theta, grid.size))
    for j in range(model.dim_theta):
        h = 1e-5 * max(1.0, abs(th[j]))
        room = min(th[j] - lo[j], hi[j] - th[j])
        if room >= h:
            plus, minus = h, h
        elif room >= 1e-3 * h:
            plus = minus = room
        elif hi[j] - th[j] >= h:
            plus, minus = h, 0.0
        elif th[j] - lo[j] >= h:
            plus, minus = 0.0, h
        else:
            raise InvalidArgument(f"theta_box too narrow to differentiate coordinate {j}")
        up, down = th.copy(), th.copy()
        up[j] += plus
        down[j] -= minus
        zero = np.zeros(grid.n_steps)
        rows[j] = (_integrate(model, up, grid, zero)
                   - _integrate(model, down, grid, zero)) / (plus + minus)
    return SensitivityTrajectory(grid, rows)


def draw_increments(rng: np.random.Generator, grid: TimeGrid, n_paths=None) -> np.ndarray:
    """Brownian increments on ``grid`` in time order; ``(n_paths, n_steps)`` if batched."""
    shape = grid.n_steps if n_paths is None else (n_paths, grid.n_steps)
    return rng.standard_normal(shape) * math.sqrt(grid.dt)


def simulate_sde(model: ModelSpec, theta, eps: float, grid: TimeGrid,
                 rng: np.random.Generator) -> Trajectory:
    """One path of ``dX = S_t(theta, X) dt + eps dW`` with ``X_0 = x0``."""
    if not eps >= 0:
        raise InvalidArgument(f"eps must be >= 0, got {eps}")
    th = model.check_theta(theta)
    _check_grid(model, grid)
    noise = eps * draw_increments(rng, grid)
    return Trajectory(grid, _integrate(model, th, grid, noise))


def _state_derivatives(model: ModelSpec, theta: np.ndarray, grid: TimeGrid):
    """``V_x`` along ``x_t(theta)`` and the weighted ``K_x`` memory matrix.

    Returns ``a`` with ``a[k] = V_x(theta, t_k, x_k)`` and ``H`` (or None
    when K is zero) such that ``H[k] @ y`` is the trapezoid approximation of
    ``int_0^{t_k} K_x(theta, t_k, s, x_s) y_s ds``.
    """
    xbar = _integrate(model, theta, grid, np.zeros(grid.n_steps))
    t = grid.points
    a = np.empty(grid.size)
    for k in range(grid.size):
        if model.V_x is not None:
            a[k] = model.V_x(theta, t[k], xbar[k])
        else:
            h = 1e-6 * max(1.0, abs(xbar[k]))
            a[k] = (model.V(theta, t[k], xbar[k] + h)
                    - model.V(theta, t[k], xbar[k] - h)) / (2.0 * h)
    if model.K is None:
        return a, None
    H = np.zeros((grid.size, grid.size))
    for k in range(1, grid.size):
        s, xs = t[:k + 1], xbar[:k + 1]
        if model.K_x is not None:
            row = np.asarray(model.K_x(theta, t[k], s, xs), dtype=float)
        else:
            h = 1e-6 * np.maximum(1.0, np.abs(xs))
            row = (np.asarray(model.K(theta, t[k], s, xs + h), dtype=float)
                   - np.asarray(model.K(theta, t[k], s, xs - h), dtype=float)) / (2.0 * h)
        row = row * grid.dt
        row[0] *= 0.5
        row[k] *= 0.5
        H[k, :k + 1] = row
    return a, H


def _first_order_paths(a, H, grid: TimeGrid, increments: np.ndarray) -> np.ndarray:
    """Heun scheme for the linear equation of x^(1); one column per path."""
    dW = np.atleast_2d(increments).T  # (n_steps, n_paths)
    dt = grid.dt
    y = np.zeros((grid.size, dW.shape[1]))
    for k in range(grid.n_steps):
        d0 = a[k] * y[k]
        past = 0.0
        if H is not None:
            past = H[k + 1, :k + 1] @ y[:k + 1]
            d0 = d0 + H[k, :k + 1] @ y[:k + 1]
        pred = y[k] + d0 * dt + dW[k]
        d1 = a[k + 1] * pred + past
        if H is not None:
            d1 = d1 + H[k + 1, k + 1] * pred
        y[k + 1] = y[k] + 0.5 * (d0 + d1) * dt + dW[k]
    bad = ~np.isfinite(y).all(axis=1)
    if bad.any():
        raise NumericalBlowup(grid.points[np.argmax(bad)])
    return y


def simulate_first_order(model: ModelSpec, theta_star, grid: TimeGrid,
                         rng: np.random.Generator) -> Trajectory:
    """One path of the Gaussian process x^(1) (linearisation around ``x(theta*)``).

    Uses the same increments as :func:`simulate_sde` would draw from an
    identically seeded ``rng``.
    """
    th = model.check_theta(theta_star)
    _check_grid(model, grid)
    a, H = _state_derivatives(model, th, grid)
    y = _first_order_paths(a, H, grid, draw_increments(rng, grid))
    return Trajectory(grid, y[:, 0])


def simulate_first_order_batch(model: ModelSpec, theta_star, grid: TimeGrid,
                               rng: np.random.Generator, n_paths: int,
                               chunk: int = 4096) -> np.ndarray:
    """``n_paths`` paths of x^(1) as a ``(n_paths, grid.size)`` array.

    Row ``i`` equals the ``i``-th of ``n_paths`` successive
    :func:`simulate_first_order` calls on the same generator.
    """
    th = model.check_theta(theta_star)
    _check_grid(model, grid)
    a, H = _state_derivatives(model, th, grid)
    out = np.empty((n_paths, grid.size))
    for start in range(0, n_paths, chunk):
        stop = min(n_paths, start + chunk)
        inc = draw_increments(rng, grid, stop - start)
        out[start:stop] = _first_order_paths(a, H, grid, inc).T
    return out
