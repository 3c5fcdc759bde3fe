"""Projection onto the simplex and a projected-gradient descent with Armijo backtracking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from bpps.portfolio import _kernels as kern

ARMIJO_C = 1e-4
MIN_STEP = 1e-18


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Examples
    --------
    >>> project_simplex([0.6, 0.6])
    array([0.5, 0.5])
    """
    v = np.ascontiguousarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a nonempty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    return kern.proj_simplex(v)


def project_simplex_mean(v, mu, eta: float) -> np.ndarray:
    """Projection onto the simplex points with ``mu'w >= eta``."""
    v = np.ascontiguousarray(v, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=float)
    return kern.proj_simplex_mean(v, mu, float(eta))


def descend(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], w0: np.ndarray,
            max_iters: int, step_tol: float, normalize: bool = False) -> tuple[np.ndarray, float, int]:
    """Minimize ``fun`` over the simplex by projected (sub)gradient steps.

    ``fun`` returns the value and a (sub)gradient. The step length adapts:
    it doubles after an accepted Armijo step and halves on rejection. With
    ``normalize`` the direction is scaled to unit norm, which suits
    piecewise-linear objectives whose subgradients do not shrink near an
    optimum. Stops when an accepted move is below ``step_tol`` or no step
    length gives sufficient decrease.
    """
    w = project_simplex(w0)
    f, g = fun(w)
    t = 0.5 if normalize else 1.0
    it = 0
    for it in range(1, max_iters + 1):
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        d = g / gn if normalize else g
        accepted = False
        while t > MIN_STEP:
            w_new = project_simplex(w - t * d)
            move = w_new - w
            if not np.any(move):
                t *= 0.5
                continue
            f_new, g_new = fun(w_new)
            if f_new <= f + ARMIJO_C * float(g @ move):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        step = float(np.max(np.abs(move)))
        w, f, g = w_new, f_new, g_new
        t = min(2.0 * t, 1.0 if normalize else 1e12)
        if step < step_tol:
            break
    return w, f, it
