"""Optimizer settings and weight validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9


def check_weights(w, tol: float = SUM_TOL) -> np.ndarray:
    """Return ``w`` as a float array after checking it is long-only and fully invested."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"weights must be a nonempty vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0 + tol):
        raise ValueError(f"weights outside [0, 1]: {w}")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return w


def eta_grid(mu: np.ndarray, n_points: int = 50) -> list[float]:
    """Evenly spaced mean targets from the smallest to the largest asset mean."""
    mu = np.asarray(mu, dtype=float)
    return [float(v) for v in np.linspace(mu.min(), mu.max(), n_points)]


@dataclass(frozen=True)
class MvConfig:
    """Mean targets for the max-Sharpe search; ``None`` means a 50-point grid over the asset means."""

    eta_grid: tuple[float, ...] | None = None
    risk_free: float = 0.0
    n_grid: int = 50

    def __post_init__(self):
        if self.eta_grid is not None:
            grid = tuple(float(v) for v in self.eta_grid)
            if not grid:
                raise ValueError("eta_grid must be nonempty")
            if any(b < a for a, b in zip(grid, grid[1:])):
                raise ValueError("eta_grid must be sorted ascending")
            object.__setattr__(self, "eta_grid", grid)
        if self.n_grid < 1:
            raise ValueError("n_grid must be positive")

    def grid_for(self, mu: np.ndarray) -> list[float]:
        if self.eta_grid is not None:
            return list(self.eta_grid)
        return eta_grid(mu, self.n_grid)


@dataclass(frozen=True)
class QuantileConfig:
    """Upper-tail return level ``alpha``, loss level ``beta``, loss bound ``v0`` and penalty weight."""

    alpha: float = 0.05
    beta: float = 0.95
    v0: float = -0.1
    penalty: float = 10.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.penalty < 0.0:
            raise ValueError(f"penalty must be >= 0, got {self.penalty}")


@dataclass(frozen=True)
class UtilityConfig:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"risk aversion must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 5000
    step_tol: float = 1e-12
    obj_tol: float = 1e-12
    restarts: int = 8
    seed: int = 0
    kkt_tol: float = 1e-7

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 0:
            raise ValueError("max_iters must be positive and restarts non-negative")
        if self.step_tol <= 0 or self.obj_tol <= 0:
            raise ValueError("tolerances must be positive")


def pick_best(candidates, obj_tol: float):
    """Deterministic choice among ``(objective, variance, w)`` triples, objective maximized.

    Objectives within ``obj_tol`` of the best count as tied; ties go to the
    lower variance, then to the lexicographically smallest weight vector.
    """
    if not candidates:
        raise ValueError("no candidates to choose from")
    top = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= top - obj_tol * max(1.0, abs(top))]
    v_min = min(c[1] for c in tied)
    tied = [c for c in tied if c[1] <= v_min + obj_tol * max(1.0, abs(v_min))]
    return min(tied, key=lambda c: tuple(c[2]))
