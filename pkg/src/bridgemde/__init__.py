"""Bridge/Lasso-penalized minimum-distance estimation for small-noise dynamical systems."""

__version__ = "0.1.0"

from .errors import (
    BridgeMDEError, ConfigError, ExperimentFailed, InvalidArgument, NotFound,
    NotPositiveDefinite, NumericalBlowup, OptimizationFailed,
)
from .model import (
    BuiltinModel, Measure, ModelSpec, TimeGrid, build_time_grid, builtin, builtin_names,
    custom_measure, lebesgue_measure,
)
from .dynamics import (
    SensitivityTrajectory, Trajectory, simulate_first_order, simulate_sde, solve_limit_ode,
    solve_sensitivity,
)
from .metric import l2_distance, l2_norm
from .estimator import (
    EstimateResult, LambdaRule, OptimizerConfig, PenaltyConfig, contrast, grid_oracle,
    minimize_contrast, penalty,
)
from .limit_law import (
    FisherInfo, LimitLawSpec, ZetaSample, fisher_info, limit_objective,
    minimize_limit_objective, sample_limit_distribution, sample_zeta, sample_zeta_batch,
)
from .montecarlo import (
    ComparisonReport, ExperimentConfig, RepRecord, ks_statistic, run_consistency,
    run_limit_comparison, run_replications, run_sparsity, stream, wasserstein1,
)
