"""Gibbs sampler over agent states and synthesis-model parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from bpps.bps import _kernels as kern
from bpps.bps.dlm import (
    DlmConfig,
    PosteriorPredictive,
    _vol_factor_dofs,
    bartlett_factors,
    regressors,
    volatility_filter,
)
from bpps.errors import DataError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GibbsState:
    """Chain position used to warm-start a later run: agent states and precisions per period."""

    z: np.ndarray
    precision: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class GibbsChain:
    """Retained output of one chain.

    Per retained sweep ``s``: the last-period coefficients ``beta_last[s]``,
    a draw ``evolution[s] ~ N(0, C_T)`` from that sweep's filtered
    covariance (scaled into the evolution noise at prediction time) and the
    volatility sum-of-squares ``D_last[s]``. ``trace`` holds ``beta_T`` for
    every sweep including burn-in, and ``sweep_repairs`` the jitter repairs
    each sweep needed.
    """

    beta_last: np.ndarray
    evolution: np.ndarray
    D_last: np.ndarray
    n_last: float
    beta_mean: np.ndarray
    trace: np.ndarray
    final: GibbsState
    burn: int
    repairs: int
    sweep_repairs: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.beta_last.shape[0]


def _initial_state(config: DlmConfig, mean: np.ndarray, init: GibbsState | None) -> tuple[np.ndarray, np.ndarray]:
    T, J, K = mean.shape
    z = mean.transpose(0, 2, 1).copy()
    Phi0 = np.linalg.inv(config.S0(K))
    Phi = np.broadcast_to(Phi0, (T, K, K)).copy()
    if init is not None:
        T0 = init.n_periods
        if T0 > T:
            raise DataError(f"warm start covers {T0} periods but data has only {T}")
        if T0:
            z[:T0] = init.z
            Phi[:T0] = init.precision
            Phi[T0:] = init.precision[-1]
    return z, Phi


def run_gibbs(config: DlmConfig, data: np.ndarray, mean: np.ndarray, sd: np.ndarray,
              rng: np.random.Generator, init: GibbsState | None = None,
              burn: int | None = None) -> GibbsChain:
    """Alternate coefficient FFBS, volatility backward sampling and agent-state draws.

    Parameters
    ----------
    data : (T, K) realized returns of the observed periods.
    mean, sd : (T, J, K) expert predictives for the same periods.
    init : optional warm start; periods it does not cover start at the
        expert means and the last known precision.
    burn : sweeps discarded before retention; defaults to ``config.mcmc_burn``.
    """
    data = np.ascontiguousarray(data, dtype=float)
    mean = np.ascontiguousarray(mean, dtype=float)
    sd = np.ascontiguousarray(sd, dtype=float)
    T, J, K = mean.shape
    if data.shape != (T, K) or sd.shape != mean.shape:
        raise DataError(f"data {data.shape} and forecasts {mean.shape} do not line up")
    for name, arr in (("returns", data), ("forecast means", mean), ("forecast stdevs", sd)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite {name} passed to the Gibbs sampler")
    burn = config.mcmc_burn if burn is None else burn
    draws = config.mcmc_draws
    p = K * (J + 1)
    e, delta = config.state_discount, config.vol_discount

    z, Phi = _initial_state(config, mean, init)
    G = regressors(z)
    m0 = config.m0(K, J)
    P0 = np.linalg.inv(config.C0(K, J))
    P0 = 0.5 * (P0 + P0.T)
    D0 = config.prior_dof * config.S0(K)

    vf0 = volatility_filter(config, np.zeros((T, K)))
    factor_dofs = _vol_factor_dofs(vf0)
    n_last = float(vf0.n[-1])

    beta_last = np.empty((draws, p))
    evolution = np.empty((draws, p))
    D_last = np.empty((draws, K, K))
    beta_sum = np.zeros((T, p))
    trace = np.empty((burn + draws, p))
    sweep_repairs = np.zeros(burn + draws, dtype=np.int64)
    u = np.empty(p)

    for sweep in range(burn + draws):
        try:
            eps = rng.standard_normal((T + 2, p))
            m, L, repairs = kern.info_filter(G, data, Phi, m0, P0, e)
            beta = kern.sample_states(m, L, e, eps[:T + 1])
            kern.solve_lower_t(L[T], eps[T + 1], u)
            if T:
                resid = kern.residuals(G, data, beta)
                _, D = kern.vol_filter(resid, float(config.prior_dof), D0, delta)
                A = bartlett_factors(factor_dofs, K, rng)
                Phi_path, r = kern.sample_vol(D, delta, A)
                repairs += r
                Phi = np.ascontiguousarray(Phi_path[1:])
                eps1 = rng.standard_normal((T, K, J))
                eps2 = rng.standard_normal((T, K))
                repairs += kern.sample_agents(G, beta, Phi, data, mean, sd, eps1, eps2)
                D_T = D[T]
            else:
                D_T = D0
        except (np.linalg.LinAlgError, ZeroDivisionError) as exc:
            raise NumericalError(f"linear algebra failure in Gibbs sweep {sweep}: {exc}") from exc
        _check_finite(sweep, beta=beta[T], evolution=u, precision=Phi, states=G)
        trace[sweep] = beta[T]
        sweep_repairs[sweep] = repairs
        if sweep >= burn:
            s = sweep - burn
            beta_last[s] = beta[T]
            evolution[s] = u
            D_last[s] = D_T
            beta_sum += beta[1:]

    repairs = int(sweep_repairs.sum())
    if repairs:
        log.warning("Gibbs chain needed %d jitter repairs (T=%d)", repairs, T)
    return GibbsChain(
        beta_last=beta_last,
        evolution=evolution,
        D_last=D_last,
        n_last=n_last,
        beta_mean=beta_sum / draws,
        trace=trace,
        final=GibbsState(G[:, :, 1:].copy(), Phi.copy()),
        burn=burn,
        repairs=repairs,
        sweep_repairs=sweep_repairs,
    )


def _check_finite(sweep: int, **arrays: np.ndarray) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {name} in Gibbs sweep {sweep}")


def predictive_samples(chain: GibbsChain, mean_next: np.ndarray, sd_next: np.ndarray,
                       config: DlmConfig, rng: np.random.Generator, period: int = -1) -> PosteriorPredictive:
    """One next-period return draw per retained sweep.

    ``mean_next`` and ``sd_next`` are the J x K expert predictives for the
    target period.
    """
    if mean_next is None or sd_next is None:
        raise DataError("expert forecasts for the predicted period are missing")
    mean_next = np.ascontiguousarray(mean_next, dtype=float)
    sd_next = np.ascontiguousarray(sd_next, dtype=float)
    S, p = chain.beta_last.shape
    J, K = mean_next.shape
    if p != K * (J + 1):
        raise DataError(f"forecasts ({J} experts x {K} assets) do not match chain dimension {p}")
    e, delta = config.state_discount, config.vol_discount
    h = chain.n_last + K - 1
    A = bartlett_factors(np.full(S, delta * h), K, rng)
    eps_z = rng.standard_normal((S, K, J))
    eps_x = rng.standard_normal((S, K))
    scale = float(np.sqrt((1.0 - e) / e))
    out, repairs = kern.predictive_draws(chain.beta_last, chain.evolution, scale, chain.D_last,
                                         delta, A, mean_next, sd_next, eps_z, eps_x)
    if repairs:
        log.warning("posterior predictive needed %d jitter repairs", repairs)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite posterior predictive draws")
    return PosteriorPredictive(period, out)
