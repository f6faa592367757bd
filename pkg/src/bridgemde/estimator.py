"""Penalized minimum-distance contrast and its minimizer over the parameter box."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .dynamics import Trajectory, _check_grid, _integrate
from .errors import InvalidArgument, NumericalBlowup, OptimizationFailed
from .metric import l2_norm_values
from .model import Measure, ModelSpec

__all__ = [
    "PenaltyConfig",
    "OptimizerConfig",
    "EstimateResult",
    "LambdaRule",
    "penalty",
    "contrast",
    "minimize_contrast",
    "grid_oracle",
    "golden_section",
]

ZERO_TOL = 1e-12

FITS = ("norm", "squared")


@dataclass(frozen=True)
class PenaltyConfig:
    """Bridge penalty ``lam * sum |u_j|**gamma``.

    ``fit`` selects the data term: ``"norm"`` uses ``||X - x(u)||`` and
    ``"squared"`` uses ``||X - x(u)||**2``. Both share the unpenalized
    minimizer.
    """

    gamma: float
    lam: float
    fit: str = "norm"

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise InvalidArgument(f"gamma must be positive, got {self.gamma}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidArgument(f"lambda must be >= 0, got {self.lam}")
        if self.fit not in FITS:
            raise InvalidArgument(f"fit must be one of {FITS}, got {self.fit!r}")


@dataclass(frozen=True)
class OptimizerConfig:
    starts: int = 8
    max_evals: int = 2000
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.starts < 1 or self.max_evals < 1 or not self.tol > 0:
            raise InvalidArgument("starts and max_evals must be >= 1 and tol > 0")


@dataclass(frozen=True)
class EstimateResult:
    theta_hat: np.ndarray
    contrast_value: float
    zero_pattern: tuple
    n_evals: int
    starts_used: int
    converged: bool


@dataclass(frozen=True)
class LambdaRule:
    """Penalty level as a function of the noise level.

    ``"eps"``: ``lam = lambda0 * eps``; ``"eps_pow"``: ``lam = lambda0 * eps**(1 - gamma)``.
    """

    name: str
    lambda0: float

    NAMES = ("eps", "eps_pow")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise InvalidArgument(f"unknown lambda rule {self.name!r}; expected one of {self.NAMES}")
        if not (self.lambda0 >= 0 and math.isfinite(self.lambda0)):
            raise InvalidArgument("lambda0 must be >= 0")

    def level(self, eps: float, gamma: float) -> float:
        if self.name == "eps":
            return self.lambda0 * eps
        return self.lambda0 * eps ** (1.0 - gamma)

    def limit_lambda0(self, gamma: float) -> float:
        """Penalty weight in the limit objective for this schedule.

        For ``gamma >= 1`` the relevant ratio is ``lam / eps``; for
        ``gamma < 1`` it is ``lam / eps**(1 - gamma)``.
        """
        if gamma >= 1:
            if self.name == "eps" or gamma == 1 or self.lambda0 == 0:
                return self.lambda0
            raise InvalidArgument(
                "eps_pow schedule with gamma > 1 and lambda0 > 0 has lam/eps -> infinity")
        if self.name == "eps_pow":
            return self.lambda0
        return 0.0


def penalty(u, cfg: PenaltyConfig) -> float:
    u = np.asarray(u, dtype=float)
    if cfg.lam == 0:
        return 0.0
    return cfg.lam * float(np.sum(np.abs(u) ** cfg.gamma))


class _Objective:
    """Contrast as a function of theta for a fixed observed path."""

    def __init__(self, X: Trajectory, model: ModelSpec, cfg: PenaltyConfig, mu: Measure):
        if X.grid != mu.grid:
            raise InvalidArgument("observed path and measure live on different grids")
        _check_grid(model, X.grid)
        self.X = X
        self.model = model
        self.cfg = cfg
        self.mu = mu
        self.zero_noise = np.zeros(X.grid.n_steps)
        self.n_evals = 0

    def __call__(self, theta: np.ndarray) -> float:
        self.n_evals += 1
        x = _integrate(self.model, theta, self.X.grid, self.zero_noise)
        dist = l2_norm_values(self.X.values - x, self.mu)
        fit = dist * dist if self.cfg.fit == "squared" else dist
        return fit + penalty(theta, self.cfg)

    def safe(self, theta: np.ndarray) -> float:
        try:
            return self(theta)
        except NumericalBlowup:
            return math.inf


def contrast(X: Trajectory, model: ModelSpec, theta, cfg: PenaltyConfig, mu: Measure) -> float:
    """``||X - x(theta)|| + lam * sum |theta_j|**gamma`` (squared fit if configured)."""
    th = model.check_theta(theta)
    return _Objective(X, model, cfg, mu)(th)


def golden_section(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _polish(obj: _Objective, theta: np.ndarray, value: float, lo, hi, max_passes=50):
    """Cyclic coordinate descent with an explicit test of each coordinate at zero.

    Each 1-D problem is solved by golden section on the sign interval(s)
    the coordinate may move in; the penalty is smooth away from zero there.
    """
    theta = theta.copy()
    for _ in range(max_passes):
        start_value = value
        moved = False
        for j in range(theta.size):
            def f1(v, j=j):
                th = theta.copy()
                th[j] = v
                return obj.safe(th)

            cur = theta[j]
            sides = []
            if cur >= 0 and hi[j] > max(lo[j], 0.0):
                sides.append((max(lo[j], 0.0), hi[j]))
            if cur <= 0 and min(hi[j], 0.0) > lo[j]:
                sides.append((lo[j], min(hi[j], 0.0)))
            best_v, best_f = cur, value
            # leaving zero must beat it by more than the exact-zero tolerance
            margin = ZERO_TOL if cur == 0.0 else 1e-15 * (1.0 + abs(value))
            for a, b in sides:
                v, fv = golden_section(f1, a, b)
                if fv < best_f - margin:
                    best_v, best_f = v, fv
            if cur != 0.0 and lo[j] <= 0.0 <= hi[j]:
                f0 = f1(0.0)
                if f0 <= best_f + ZERO_TOL:
                    best_v, best_f = 0.0, f0
            if best_v != cur:
                theta[j] = best_v
                value = best_f
                moved = True
        assert value <= start_value + ZERO_TOL * theta.size, "polishing increased the contrast"
        if not moved:
            break
    return theta, value


def _start_points(model: ModelSpec, opt: OptimizerConfig) -> np.ndarray:
    lo, hi = model.lower, model.upper
    p = model.dim_theta
    n_corners = 2 ** min(p, 3)
    corners = [np.array(c) for c in itertools.product(*zip(lo, hi))][:n_corners]
    corners = corners[:opt.starts]
    points = list(corners)
    n_fill = opt.starts - len(points)
    if n_fill > 0:
        lhs = qmc.LatinHypercube(d=p, seed=opt.seed).random(n_fill)
        points.extend(lo + lhs * (hi - lo))
    return np.array(points)


def _initial_simplex(x0, lo, hi):
    p = x0.size
    sim = np.tile(x0, (p + 1, 1))
    for j in range(p):
        step = 0.1 * (hi[j] - lo[j])
        if step == 0:
            continue
        sim[j + 1, j] = x0[j] + step if x0[j] + step <= hi[j] else x0[j] - step
    return sim


def _pick(candidates):
    """Lowest value; ties go to more exact zeros, then the lexicographically smallest theta."""
    best = min(v for v, _, _ in candidates)
    tied = [c for c in candidates if c[0] <= best + ZERO_TOL * max(1.0, abs(best))]
    return min(tied, key=lambda c: (-int(np.sum(c[1] == 0.0)), tuple(c[1]), c[0]))


def _result(obj, theta, starts_used, converged):
    theta = np.asarray(theta, dtype=float)
    value = obj(theta)
    zero = tuple(bool(z) for z in theta == 0.0)
    theta.setflags(write=False)
    return EstimateResult(theta, value, zero, obj.n_evals, starts_used, bool(converged))


def minimize_contrast(X: Trajectory, model: ModelSpec, cfg: PenaltyConfig, mu: Measure,
                      opt: OptimizerConfig = OptimizerConfig()) -> EstimateResult:
    """Multi-start Nelder-Mead over the box, polished coordinate-wise when ``gamma <= 1``.

    Raises
    ------
    OptimizationFailed
        If every start ends at a parameter where the solver blows up.
    """
    obj = _Objective(X, model, cfg, mu)
    lo, hi = model.lower, model.upper
    polish = cfg.gamma <= 1 and cfg.lam > 0
    candidates = []
    polished = []  # local search results already polished
    used = 0
    for x0 in _start_points(model, opt):
        res = minimize(obj.safe, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"initial_simplex": _initial_simplex(x0, lo, hi),
                                "xatol": opt.tol, "fatol": math.inf,
                                "maxfev": opt.max_evals, "maxiter": opt.max_evals})
        theta = np.clip(np.asarray(res.x, dtype=float), lo, hi)
        value = obj.safe(theta)
        if not math.isfinite(value):
            continue
        used += 1
        if polish:
            # starts that landed on the same point share one polishing run
            if any(np.max(np.abs(raw - theta)) <= 100 * opt.tol for raw in polished):
                continue
            raw = theta
            theta, value = _polish(obj, theta, value, lo, hi)
            polished.append(raw)
        candidates.append((value, theta, bool(res.success)))
    if not candidates:
        raise OptimizationFailed("all starts hit a numerical blow-up",
                                 {"starts": opt.starts, "n_evals": obj.n_evals})
    value, theta, converged = _pick(candidates)
    return _result(obj, theta, used, converged)


def grid_oracle(X: Trajectory, model: ModelSpec, cfg: PenaltyConfig, mu: Measure,
                points_per_dim: int = 41) -> EstimateResult:
    """Exhaustive search over a uniform lattice on the box (``p <= 3``)."""
    if points_per_dim < 3:
        raise InvalidArgument("points_per_dim must be >= 3")
    if model.dim_theta > 3:
        raise InvalidArgument("grid oracle limited to p <= 3")
    obj = _Objective(X, model, cfg, mu)
    axes = [np.linspace(a, b, points_per_dim) for a, b in model.theta_box]
    best_val, best_theta = math.inf, None
    for point in itertools.product(*axes):
        th = np.array(point)
        v = obj.safe(th)
        if v < best_val:
            best_val, best_theta = v, th
    if best_theta is None:
        raise OptimizationFailed("solver blew up at every lattice point")
    return _result(obj, best_theta, 0, True)
