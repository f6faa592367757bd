"""Replicated estimation experiments and their comparison with the limit law."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import simulate_sde
from .errors import ExperimentFailed, InvalidArgument, NumericalBlowup, OptimizationFailed
from .estimator import LambdaRule, OptimizerConfig, PenaltyConfig, minimize_contrast
from .limit_law import LimitLawSpec, fisher_info, sample_limit_distribution
from .model import build_time_grid, builtin, lebesgue_measure

__all__ = [
    "ExperimentConfig",
    "RepRecord",
    "ComparisonReport",
    "stream",
    "run_replications",
    "run_consistency",
    "run_limit_comparison",
    "run_sparsity",
    "ks_statistic",
    "wasserstein1",
]

log = logging.getLogger(__name__)

ROLES = {"path": 0, "limit": 1, "optimizer": 2}
MAX_FAILURE_RATE = 0.2


def stream(base_seed: int, eps_index: int, rep_index: int, role: str) -> np.random.Generator:
    """Independent generator keyed by ``(base_seed, eps_index, rep_index, role)``.

    Keys map to disjoint streams regardless of the order in which they are
    requested, so replications can run in any order or process.
    """
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(eps_index, rep_index, ROLES[role]))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    theta_star: tuple
    eps_list: tuple
    reps: int
    gamma: float
    lambda_rule: LambdaRule
    n_steps: int = 500
    base_seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    fit: str = "norm"

    def __post_init__(self):
        spec = builtin(self.model).spec
        th = tuple(float(v) for v in self.theta_star)
        if len(th) != spec.dim_theta:
            raise InvalidArgument(f"theta_star needs {spec.dim_theta} entries for {self.model}")
        arr = np.array(th)
        if np.any(arr <= spec.lower) or np.any(arr >= spec.upper):
            raise InvalidArgument("theta_star must lie strictly inside theta_box")
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(not e >= 0 for e in eps) or len(set(eps)) != len(eps):
            raise InvalidArgument("eps_list needs distinct nonnegative values")
        if int(self.reps) != self.reps or self.reps < 1:
            raise InvalidArgument("reps must be a positive integer")
        PenaltyConfig(self.gamma, 0.0, self.fit)
        object.__setattr__(self, "theta_star", th)
        object.__setattr__(self, "eps_list", eps)

    @property
    def p(self) -> int:
        return len(self.theta_star)

    def penalty(self, eps: float) -> PenaltyConfig:
        return PenaltyConfig(self.gamma, self.lambda_rule.level(eps, self.gamma), self.fit)

    def setup(self):
        model = builtin(self.model).spec
        grid = build_time_grid(model.T, self.n_steps)
        return model, grid, lebesgue_measure(grid)


@dataclass(frozen=True)
class RepRecord:
    eps: float
    eps_index: int
    rep: int
    theta_hat: tuple
    rescaled_error: tuple
    zero_pattern: tuple
    contrast: float
    converged: bool
    wall_time: float
    failed: bool = False
    message: str = ""


def _optimizer_for(config: ExperimentConfig, eps_index: int, rep: int) -> OptimizerConfig:
    seq = np.random.SeedSequence([int(config.base_seed), int(config.optimizer.seed)],
                                 spawn_key=(eps_index, rep, ROLES["optimizer"]))
    opt = config.optimizer
    return OptimizerConfig(opt.starts, opt.max_evals, opt.tol, int(seq.generate_state(1)[0]))


def run_rep(config: ExperimentConfig, eps_index: int, rep: int) -> RepRecord:
    """Simulate one path at ``eps_list[eps_index]`` and estimate theta from it."""
    model, grid, mu = config.setup()
    eps = config.eps_list[eps_index]
    theta_star = np.array(config.theta_star)
    start = time.perf_counter()
    try:
        X = simulate_sde(model, theta_star, eps, grid, stream(config.base_seed, eps_index, rep, "path"))
        res = minimize_contrast(X, model, config.penalty(eps), mu,
                                _optimizer_for(config, eps_index, rep))
    except (NumericalBlowup, OptimizationFailed) as exc:
        log.warning("rep %d at eps=%g failed: %s", rep, eps, exc)
        nan = (math.nan,) * config.p
        return RepRecord(eps, eps_index, rep, nan, nan, (False,) * config.p, math.nan,
                         False, time.perf_counter() - start, True, str(exc))
    theta_hat = tuple(float(v) for v in res.theta_hat)
    # a noise-free run has no rescaled error
    rescaled = (tuple(float(v) for v in (res.theta_hat - theta_star) / eps) if eps > 0
                else (math.nan,) * config.p)
    return RepRecord(eps, eps_index, rep, theta_hat, rescaled, res.zero_pattern,
                     res.contrast_value, res.converged, time.perf_counter() - start)


def _run_rep_args(args):
    return run_rep(*args)


def run_replications(config: ExperimentConfig, workers: int = 1) -> list[RepRecord]:
    """All ``(eps, rep)`` estimations, ordered by eps index then rep."""
    tasks = [(config, e, r) for e in range(len(config.eps_list)) for r in range(config.reps)]
    if workers <= 1:
        records = [_run_rep_args(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_rep_args, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return sorted(records, key=lambda r: (r.eps_index, r.rep))


def _check_failures(records, eps):
    failed = sum(r.failed for r in records)
    if failed > MAX_FAILURE_RATE * len(records):
        raise ExperimentFailed(f"{failed}/{len(records)} replications failed at eps={eps}")
    return [r for r in records if not r.failed], failed


def _by_eps(config, records):
    for e, eps in enumerate(config.eps_list):
        yield eps, [r for r in records if r.eps_index == e]


@dataclass(frozen=True)
class ConsistencyRow:
    eps: float
    n_ok: int
    n_failed: int
    median_abs_error: tuple
    p90_abs_error: tuple


def run_consistency(config: ExperimentConfig, workers: int = 1, records=None):
    """Median and 90th-percentile ``|theta_hat - theta*|`` per coordinate for each eps.

    Returns ``(rows, records)``.
    """
    if records is None:
        records = run_replications(config, workers)
    theta_star = np.array(config.theta_star)
    rows = []
    for eps, recs in _by_eps(config, records):
        ok, failed = _check_failures(recs, eps)
        err = np.abs(np.array([r.theta_hat for r in ok]) - theta_star)
        rows.append(ConsistencyRow(eps, len(ok), failed,
                                   tuple(np.median(err, axis=0).tolist()),
                                   tuple(np.quantile(err, 0.9, axis=0).tolist())))
    return rows, records


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / a.size
    Fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def wasserstein1(a, b) -> float:
    """``int |F_a - F_b| dx`` between empirical distributions."""
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    pts = np.sort(np.concatenate([a, b]))
    gaps = np.diff(pts)
    Fa = np.searchsorted(a, pts[:-1], side="right") / a.size
    Fb = np.searchsorted(b, pts[:-1], side="right") / b.size
    return float(np.sum(np.abs(Fa - Fb) * gaps))


@dataclass(frozen=True)
class ComparisonReport:
    eps: float
    regime: str
    lambda0_limit: float
    n_reps: int
    n_failed: int
    n_limit: int
    ks: list
    wasserstein: list
    zero_fraction: list
    limit_zero_fraction: list
    estimator_mean: list
    estimator_var: list
    limit_mean: list
    limit_var: list

    def to_dict(self) -> dict:
        return asdict(self)


def run_limit_comparison(config: ExperimentConfig, n_limit: int, workers: int = 1,
                         zeta_sampler: Optional[Callable] = None, records=None):
    """Rescaled errors at a single eps against draws of ``argmin V``.

    Returns ``(report, records, limit_samples)``.
    """
    if len(config.eps_list) != 1 or not config.eps_list[0] > 0:
        raise InvalidArgument("limit comparison needs exactly one positive eps")
    if records is None:
        records = run_replications(config, workers)
    eps = config.eps_list[0]
    ok, failed = _check_failures(records, eps)
    model, grid, mu = config.setup()
    theta_star = np.array(config.theta_star)
    spec = LimitLawSpec(theta_star, fisher_info(model, theta_star, mu, grid),
                        config.gamma, config.lambda_rule.limit_lambda0(config.gamma))
    limit = sample_limit_distribution(model, theta_star, mu, grid, spec, n_limit,
                                      stream(config.base_seed, 0, 0, "limit"), zeta_sampler)
    errs = np.array([r.rescaled_error for r in ok])
    zeros = np.array([r.zero_pattern for r in ok], dtype=float)
    report = ComparisonReport(
        eps=eps,
        regime=spec.regime,
        lambda0_limit=spec.lambda0,
        n_reps=len(ok),
        n_failed=failed,
        n_limit=n_limit,
        ks=[ks_statistic(errs[:, j], limit[:, j]) for j in range(config.p)],
        wasserstein=[wasserstein1(errs[:, j], limit[:, j]) for j in range(config.p)],
        zero_fraction=zeros.mean(axis=0).tolist(),
        limit_zero_fraction=(limit == 0.0).mean(axis=0).tolist(),
        estimator_mean=errs.mean(axis=0).tolist(),
        estimator_var=errs.var(axis=0, ddof=1).tolist(),
        limit_mean=limit.mean(axis=0).tolist(),
        limit_var=limit.var(axis=0, ddof=1).tolist(),
    )
    return report, records, limit


@dataclass(frozen=True)
class SparsityRow:
    eps: float
    n_ok: int
    n_failed: int
    zero_fraction: tuple
    null_coords: tuple
    false_zero_rate: float


def run_sparsity(config: ExperimentConfig, workers: int = 1, records=None):
    """Fraction of replications with an exact zero, per coordinate and eps.

    ``false_zero_rate`` is the largest zero fraction among coordinates whose
    true value is nonzero. Returns ``(rows, records)``.
    """
    null = tuple(j for j, v in enumerate(config.theta_star) if v == 0.0)
    if not null:
        raise InvalidArgument("sparsity experiment needs at least one zero in theta_star")
    if records is None:
        records = run_replications(config, workers)
    rows = []
    for eps, recs in _by_eps(config, records):
        ok, failed = _check_failures(recs, eps)
        frac = np.array([r.zero_pattern for r in ok], dtype=float).mean(axis=0)
        nonnull = [frac[j] for j in range(config.p) if j not in null]
        rows.append(SparsityRow(eps, len(ok), failed, tuple(frac.tolist()), null,
                                float(max(nonnull)) if nonnull else 0.0))
    return rows, records
