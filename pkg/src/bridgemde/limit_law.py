"""Asymptotic objects: Fisher information, the Gaussian vector zeta and the limit objective.

The rescaled error ``(theta_hat - theta*) / eps`` converges in law to the
minimizer of

    V(u) = -2 u.zeta + u' I u + lambda0 * P(u)

where the penalty part ``P`` depends on the Bridge exponent regime.
Everything here is vectorized over a batch of ``zeta`` draws.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import simulate_first_order, simulate_first_order_batch, solve_sensitivity
from .errors import InvalidArgument, NotPositiveDefinite, OptimizationFailed
from .model import Measure, ModelSpec, TimeGrid

__all__ = [
    "FisherInfo",
    "LimitLawSpec",
    "ZetaSample",
    "fisher_info",
    "sample_zeta",
    "sample_zeta_batch",
    "limit_objective",
    "minimize_limit_objective",
    "sample_limit_distribution",
    "soft_threshold",
    "bridge_prox",
]

ZERO_TOL = 1e-12
MAX_ITERS = 10_000


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgument("Fisher information must be a square matrix")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise InvalidArgument("Fisher information must be symmetric")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(np.linalg.eigvalsh(m).min()) from None
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ZetaSample:
    value: np.ndarray


@dataclass(frozen=True)
class LimitLawSpec:
    """Parameters of the limit objective.

    ``paper_literal_gamma1`` switches the ``gamma == 1`` drift term on
    nonzero coordinates from ``sgn(theta*_j)`` to ``sgn(theta*_j) |theta*_j|``.
    """

    theta_star: np.ndarray
    info: FisherInfo
    gamma: float
    lambda0: float
    paper_literal_gamma1: bool = False
    regime: str = field(init=False)

    def __post_init__(self):
        th = np.array(self.theta_star, dtype=float).reshape(-1)
        if th.size != self.info.dim:
            raise InvalidArgument("theta_star and Fisher information disagree on p")
        if not self.gamma > 0:
            raise InvalidArgument("gamma must be positive")
        if not self.lambda0 >= 0:
            raise InvalidArgument("lambda0 must be >= 0")
        th.setflags(write=False)
        object.__setattr__(self, "theta_star", th)
        regime = "gamma>1" if self.gamma > 1 else "gamma=1" if self.gamma == 1 else "gamma<1"
        object.__setattr__(self, "regime", regime)

    @property
    def penalized(self) -> np.ndarray:
        """Coordinates carrying a nonsmooth penalty in the limit (``theta*_j == 0``)."""
        return self.theta_star == 0.0

    def linear_term(self) -> np.ndarray:
        """Coefficient ``c`` of the linear penalty part ``lambda0 * c.u``."""
        th = self.theta_star
        if self.regime == "gamma>1":
            return np.sign(th) * np.abs(th) ** (self.gamma - 1.0)
        if self.regime == "gamma=1":
            return np.sign(th) * (np.abs(th) if self.paper_literal_gamma1 else 1.0)
        return np.zeros_like(th)


def fisher_info(model: ModelSpec, theta, mu: Measure, grid: TimeGrid) -> FisherInfo:
    """``I_jk = sum_m w_m xdot_j(t_m) xdot_k(t_m)``."""
    if mu.grid != grid:
        raise InvalidArgument("measure and grid disagree")
    rows = solve_sensitivity(model, theta, grid).rows
    m = (rows * mu.weights) @ rows.T
    return FisherInfo(0.5 * (m + m.T))


def _zeta_loadings(model, theta_star, mu, grid):
    if mu.grid != grid:
        raise InvalidArgument("measure and grid disagree")
    rows = solve_sensitivity(model, theta_star, grid).rows
    return (rows * mu.weights).T  # (grid.size, p)


def sample_zeta(model: ModelSpec, theta_star, mu: Measure, grid: TimeGrid,
                rng: np.random.Generator) -> ZetaSample:
    """One draw of ``zeta = int x1_t xdot_t(theta*) mu(dt)``."""
    load = _zeta_loadings(model, theta_star, mu, grid)
    x1 = simulate_first_order(model, theta_star, grid, rng).values
    return ZetaSample(x1 @ load)


def sample_zeta_batch(model: ModelSpec, theta_star, mu: Measure, grid: TimeGrid,
                      rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` draws of ``zeta`` as an ``(n, p)`` array; row ``i`` is the ``i``-th
    of ``n`` successive :func:`sample_zeta` calls on the same generator."""
    load = _zeta_loadings(model, theta_star, mu, grid)
    return simulate_first_order_batch(model, theta_star, grid, rng, n) @ load


def _as_batch(u, p):
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = u.reshape(-1, p)
    return u, single


def limit_objective(u, zeta, spec: LimitLawSpec):
    """Evaluate ``V(u)``. Accepts a single ``u`` or an ``(n, p)`` batch."""
    I = spec.info.matrix
    p = I.shape[0]
    U, single = _as_batch(u, p)
    z = np.asarray(getattr(zeta, "value", zeta), dtype=float).reshape(-1, p)
    val = -2.0 * np.sum(U * z, axis=1) + np.einsum("ij,jk,ik->i", U, I, U)
    if spec.lambda0 > 0:
        pen = U @ spec.linear_term()
        mask = spec.penalized
        if spec.regime == "gamma=1":
            pen = pen + np.abs(U[:, mask]).sum(axis=1)
        elif spec.regime == "gamma<1":
            pen = pen + (np.abs(U[:, mask]) ** spec.gamma).sum(axis=1)
        val = val + spec.lambda0 * pen
    return float(val[0]) if single else val


def soft_threshold(b, a, lam):
    """``argmin_v a v^2 - 2 b v + lam |v|``."""
    b = np.asarray(b, dtype=float)
    return np.sign(b) * np.maximum(0.0, np.abs(b) - lam / 2.0) / a


def bridge_prox(b, a, lam, gamma, iters=100):
    """``argmin_v a v^2 - 2 b v + lam |v|**gamma`` for ``0 < gamma <= 1``.

    Ties between zero and a nonzero local minimum go to zero.
    """
    if gamma == 1:
        return soft_threshold(b, a, lam)
    b = np.asarray(b, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), b.shape)
    B = np.abs(b)
    # f'(v) = 2 a v - 2 B + lam gamma v**(gamma-1) is convex on v > 0 with
    # its minimum at vc; a nonzero minimizer is the larger root of f'.
    # Newton started right of that root decreases monotonically onto it.
    vc = (lam * gamma * (1.0 - gamma) / (2.0 * a)) ** (1.0 / (2.0 - gamma))

    def fprime(v):
        return 2.0 * a * v - 2.0 * B + lam * gamma * v ** (gamma - 1.0)

    has_root = (B > 0) & (fprime(vc) < 0)
    v = np.where(has_root, np.maximum(B / a, vc), 1.0)
    for _ in range(iters):
        g = fprime(v)
        h = 2.0 * a + lam * gamma * (gamma - 1.0) * v ** (gamma - 2.0)
        nxt = np.where(has_root, np.maximum(v - g / h, vc), v)
        done = np.all(np.abs(nxt - v) <= 1e-15 * nxt)
        v = nxt
        if done:
            break
    fv = a * v * v - 2.0 * B * v + lam * v ** gamma
    keep = has_root & (fv < -ZERO_TOL)
    return np.where(keep, np.sign(b) * v, 0.0)


def _unpenalized(Z, I, c, lam0):
    rhs = Z - 0.5 * lam0 * c
    return np.linalg.solve(I, rhs.T).T


def _kkt_refine(U, Z, spec: LimitLawSpec):
    """Replace approximate gamma=1 solutions by the exact solution on their active set."""
    I = spec.info.matrix
    lam0 = spec.lambda0
    pen = spec.penalized
    c = spec.linear_term()
    signs = np.where(pen, np.sign(U), 2.0)  # 2 marks unpenalized coordinates
    out = U.copy()
    patterns, inverse = np.unique(signs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pat in enumerate(patterns):
        rows = inverse == k
        active = pat != 0
        if not active.any():
            cand = np.zeros((rows.sum(), I.shape[0]))
        else:
            sigma = np.where(pat == 2.0, 0.0, pat)
            rhs = Z[rows][:, active] - 0.5 * lam0 * (c[active] + sigma[active])
            cand = np.zeros((rows.sum(), I.shape[0]))
            cand[:, active] = np.linalg.solve(I[np.ix_(active, active)], rhs.T).T
        grad = 2.0 * cand @ I - 2.0 * Z[rows] + lam0 * c
        ok = np.ones(rows.sum(), dtype=bool)
        for j in np.flatnonzero(pen):
            if pat[j] == 0:
                ok &= np.abs(grad[:, j]) <= lam0 * (1.0 + 1e-9) + 1e-12
            else:
                ok &= np.sign(cand[:, j]) == pat[j]
        idx = np.flatnonzero(rows)
        out[idx[ok]] = cand[ok]
    return out


def _ista(Z, spec: LimitLawSpec, tol=1e-10):
    I = spec.info.matrix
    lam0 = spec.lambda0
    pen = spec.penalized
    c = spec.linear_term()
    L = 2.0 * np.linalg.eigvalsh(I).max()
    U = _unpenalized(Z, I, c, lam0)
    for _ in range(MAX_ITERS):
        grad = 2.0 * U @ I - 2.0 * Z + lam0 * c
        nxt = U - grad / L
        nxt[:, pen] = np.sign(nxt[:, pen]) * np.maximum(np.abs(nxt[:, pen]) - lam0 / L, 0.0)
        step = np.abs(nxt - U).max()
        U = nxt
        if step < tol:
            return _kkt_refine(U, Z, spec)
    raise OptimizationFailed(f"proximal gradient did not converge in {MAX_ITERS} iterations")


def _coordinate_descent(U, Z, spec: LimitLawSpec, free=None, tol=1e-9):
    """Cyclic exact coordinate minimization over the ``free`` coordinates."""
    I = spec.info.matrix
    pen = spec.penalized
    diag = np.diag(I)
    coords = np.flatnonzero(np.ones(I.shape[0], bool) if free is None else free)
    for _ in range(MAX_ITERS):
        prev = U.copy()
        for j in coords:
            b = Z[:, j] - (U @ I[:, j] - U[:, j] * diag[j])
            if pen[j]:
                U[:, j] = bridge_prox(b, diag[j], spec.lambda0, spec.gamma)
            else:
                U[:, j] = b / diag[j]
        if np.abs(U - prev).max() < tol:
            return U
    raise OptimizationFailed(f"coordinate descent did not converge in {MAX_ITERS} passes")


def _face_start(Z, I, zero):
    """Unpenalized minimizer with the ``zero`` coordinates pinned at zero."""
    U = np.zeros_like(Z)
    keep = ~zero
    if keep.any():
        U[:, keep] = np.linalg.solve(I[np.ix_(keep, keep)], Z[:, keep].T).T
    return U


def _newton_polish(U, Z, spec: LimitLawSpec, iters=50):
    """Newton steps on the smooth problem over each row's support and signs.

    A row is updated only if its signs survive and ``V`` does not increase.
    """
    I = spec.info.matrix
    pen = spec.penalized
    lam0, gamma = spec.lambda0, spec.gamma
    out = U.copy()
    support, inverse = np.unique(U != 0.0, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, S in enumerate(support):
        if not S.any():
            continue
        rows = np.flatnonzero(inverse == k)
        I_S = I[np.ix_(S, S)]
        pen_S = pen[S]
        u = U[rows][:, S]
        z = Z[rows][:, S]
        sign = np.sign(u)
        for _ in range(iters):
            mag = np.abs(u)
            grad = 2.0 * u @ I_S - 2.0 * z
            grad[:, pen_S] += lam0 * gamma * sign[:, pen_S] * mag[:, pen_S] ** (gamma - 1.0)
            hess = np.broadcast_to(2.0 * I_S, (len(rows),) + I_S.shape).copy()
            curv = lam0 * gamma * (gamma - 1.0) * mag[:, pen_S] ** (gamma - 2.0)
            idx = np.flatnonzero(pen_S)
            hess[:, idx, idx] += curv
            try:
                step = np.linalg.solve(hess, grad[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
            nxt = u - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(np.abs(nxt), 1e-300)):
                u = nxt
                break
            u = nxt
        full = U[rows].copy()
        full[:, S] = u
        ok = np.all(np.sign(u) == sign, axis=1) & np.all(np.isfinite(u), axis=1)
        ok &= limit_objective(full, Z[rows], spec) <= limit_objective(U[rows], Z[rows], spec)
        out[rows[ok]] = full[ok]
    return out


def _nonconvex(Z, spec: LimitLawSpec):
    """Best local minimum over the faces and orthants of the penalized coordinates.

    Each penalized coordinate is either pinned at zero or started on one
    side; coordinate descent then runs over the unpinned coordinates only.
    """
    I = spec.info.matrix
    pen_idx = np.flatnonzero(spec.penalized)
    if len(pen_idx) <= 5:
        patterns = list(itertools.product((-1.0, 0.0, 1.0), repeat=len(pen_idx)))
    else:
        patterns = [(0.0,) * len(pen_idx), None]
    best_U, best_V, best_zeros = None, None, None
    for pat in patterns:
        zero = np.zeros(I.shape[0], dtype=bool)
        if pat is None:
            U0 = _face_start(Z, I, zero)
        else:
            pat = np.asarray(pat)
            zero[pen_idx] = pat == 0.0
            U0 = _face_start(Z, I, zero)
            mag = np.maximum(np.abs(U0[:, pen_idx]), 1e-3)
            U0[:, pen_idx] = pat * mag
        U = _newton_polish(_coordinate_descent(U0, Z, spec, free=~zero), Z, spec)
        V = limit_objective(U, Z, spec)
        zeros = np.sum(U == 0.0, axis=1)
        if best_U is None:
            best_U, best_V, best_zeros = U, V, zeros
            continue
        tie = np.abs(V - best_V) <= ZERO_TOL * np.maximum(1.0, np.abs(best_V))
        better = (V < best_V) & ~tie
        better |= tie & (zeros > best_zeros)
        # lexicographic order among equal values and equal zero counts
        same = tie & (zeros == best_zeros)
        if same.any():
            lex = np.array([tuple(a) < tuple(b) for a, b in zip(U[same], best_U[same])])
            idx = np.flatnonzero(same)
            better[idx[lex]] = True
        best_U[better] = U[better]
        best_V[better] = V[better]
        best_zeros[better] = zeros[better]
    return best_U


def _argmin_batch(Z: np.ndarray, spec: LimitLawSpec) -> np.ndarray:
    I = spec.info.matrix
    Z = np.asarray(Z, dtype=float).reshape(-1, I.shape[0])
    if spec.lambda0 == 0 or spec.regime == "gamma>1":
        return _unpenalized(Z, I, spec.linear_term(), spec.lambda0)
    if not spec.penalized.any():
        return _unpenalized(Z, I, spec.linear_term(), spec.lambda0)
    if spec.regime == "gamma=1":
        return _ista(Z, spec)
    return _nonconvex(Z, spec)


def minimize_limit_objective(zeta, spec: LimitLawSpec) -> np.ndarray:
    """``argmin_u V(u)`` for one ``zeta`` draw.

    Closed form for ``gamma > 1``; proximal gradient for ``gamma == 1``;
    coordinate descent from every sign pattern of the penalized coordinates,
    with an explicit zero test per coordinate, for ``gamma < 1``.
    """
    z = np.asarray(getattr(zeta, "value", zeta), dtype=float).reshape(1, -1)
    return _argmin_batch(z, spec)[0]


def sample_limit_distribution(model: ModelSpec, theta_star, mu: Measure, grid: TimeGrid,
                              spec: LimitLawSpec, n: int, rng: np.random.Generator,
                              zeta_sampler: Optional[Callable] = None) -> np.ndarray:
    """``n`` independent draws of ``argmin V`` as an ``(n, p)`` array.

    ``zeta_sampler(rng, n)`` may replace the simulated ``zeta`` draws; it
    must return an ``(n, p)`` array.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if zeta_sampler is None:
        Z = sample_zeta_batch(model, theta_star, mu, grid, rng, n)
    else:
        Z = np.asarray(zeta_sampler(rng, n), dtype=float).reshape(n, -1)
    return _argmin_batch(Z, spec)
