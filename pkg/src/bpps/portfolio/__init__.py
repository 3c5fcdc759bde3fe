"""Simplex-constrained portfolio optimizers."""

from bpps.portfolio.configs import (
    MvConfig,
    OptimizerConfig,
    QuantileConfig,
    UtilityConfig,
    check_weights,
    eta_grid,
    pick_best,
)
from bpps.portfolio.mean_variance import (
    FrontierPoint,
    frontier,
    max_sharpe_frontier,
    q_alpha_objective,
    solve_min_variance_at_mean,
    solve_quadratic_utility,
    utility,
)
from bpps.portfolio.quantile import QuantileObjective, solve_quantile
from bpps.portfolio.risk_parity import (
    erc_newton,
    rc_objective,
    repair_covariance,
    risk_contributions,
    solve_risk_parity,
)
from bpps.portfolio.search import descend, project_simplex, project_simplex_mean

__all__ = [
    "FrontierPoint",
    "MvConfig",
    "OptimizerConfig",
    "QuantileConfig",
    "QuantileObjective",
    "UtilityConfig",
    "check_weights",
    "descend",
    "erc_newton",
    "eta_grid",
    "frontier",
    "max_sharpe_frontier",
    "pick_best",
    "project_simplex",
    "project_simplex_mean",
    "q_alpha_objective",
    "rc_objective",
    "repair_covariance",
    "risk_contributions",
    "solve_min_variance_at_mean",
    "solve_quadratic_utility",
    "solve_quantile",
    "solve_risk_parity",
    "utility",
]
