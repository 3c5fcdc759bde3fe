"""Dynamic linear synthesis model: types, filters and conditional samplers.

Returns are modelled as ``x_t = F(z_t) beta_t + nu_t`` with
``nu_t ~ N(0, V_t)``, a random-walk coefficient vector discounted by ``e``
and a K x K observation covariance evolved by matrix discounting with
``delta``. ``z_t`` (K x J) holds the latent agent states, one column per
expert.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from bpps.bps import _kernels as kern
from bpps.errors import ConfigError, DataError


@dataclass(frozen=True)
class DlmConfig:
    """Discounts, conjugate prior and MCMC budget of the synthesis model.

    Scalar prior settings expand to ``C0 = prior_cov_scale * I`` and
    ``S0 = prior_scale * I``. ``prior_mean=None`` means zero intercepts and
    equal ``1/J`` expert coefficients. Explicit arrays may be supplied via
    ``prior_mean``, ``prior_cov`` and ``prior_scale_matrix``.
    """

    state_discount: float = 0.99
    vol_discount: float = 0.95
    prior_dof: float = 10.0
    prior_scale: float = 1e-4
    prior_cov_scale: float = 1.0
    mcmc_burn: int = 2000
    mcmc_draws: int = 3000
    warm_burn: int = 250
    seed: int = 0
    prior_mean: np.ndarray | None = field(default=None, compare=False)
    prior_cov: np.ndarray | None = field(default=None, compare=False)
    prior_scale_matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.state_discount <= 1.0:
            raise ConfigError(f"state_discount must be in (0, 1], got {self.state_discount}")
        if not 0.0 < self.vol_discount <= 1.0:
            raise ConfigError(f"vol_discount must be in (0, 1], got {self.vol_discount}")
        if self.prior_dof <= 0:
            raise ConfigError("prior_dof must be positive")
        if self.prior_scale <= 0 or self.prior_cov_scale <= 0:
            raise ConfigError("prior scales must be positive")
        if self.mcmc_draws < 1 or self.mcmc_burn < 0 or self.warm_burn < 0:
            raise ConfigError("mcmc_draws must be >= 1 and burn-in counts >= 0")
        for name in ("prior_cov", "prior_scale_matrix"):
            mat = getattr(self, name)
            if mat is not None:
                _require_spd(np.asarray(mat, dtype=float), name)

    def with_(self, **changes) -> "DlmConfig":
        return replace(self, **changes)

    def m0(self, K: int, J: int) -> np.ndarray:
        if self.prior_mean is not None:
            m0 = np.asarray(self.prior_mean, dtype=float)
            if m0.shape != (K * (J + 1),):
                raise ConfigError(f"prior_mean must have length {K * (J + 1)}")
            return m0
        block = np.zeros(J + 1)
        if J:
            block[1:] = 1.0 / J
        return np.tile(block, K)

    def C0(self, K: int, J: int) -> np.ndarray:
        p = K * (J + 1)
        if self.prior_cov is not None:
            C0 = np.asarray(self.prior_cov, dtype=float)
            if C0.shape != (p, p):
                raise ConfigError(f"prior_cov must be {p} x {p}")
            return C0
        return self.prior_cov_scale * np.eye(p)

    def S0(self, K: int) -> np.ndarray:
        if self.prior_scale_matrix is not None:
            S0 = np.asarray(self.prior_scale_matrix, dtype=float)
            if S0.shape != (K, K):
                raise ConfigError(f"prior_scale_matrix must be {K} x {K}")
            return S0
        return self.prior_scale * np.eye(K)

    def scalar_fields(self) -> dict:
        skip = {"prior_mean", "prior_cov", "prior_scale_matrix"}
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}


def _require_spd(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"{name} must be square")
    if not np.allclose(mat, mat.T):
        raise ConfigError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} must be positive definite") from None


def is_spd(mat: np.ndarray) -> bool:
    if not np.allclose(mat, mat.T, rtol=1e-10, atol=0.0):
        return False
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class DlmPosteriorDraw:
    """One joint draw of the coefficient path and observation covariances.

    ``beta`` is (T, K(J+1)) and ``V`` is (T, K, K) for periods 1..T.
    """

    beta: np.ndarray
    V: np.ndarray
    precision: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class PosteriorPredictive:
    """Equally weighted Monte Carlo draws of next-period returns, shape (S, K)."""

    period: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise DataError("posterior predictive needs at least one sample row")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_assets(self) -> int:
        return self.samples.shape[1]


def build_F(z: np.ndarray) -> np.ndarray:
    """K x K(J+1) block-diagonal regression matrix; row k is ``[1, z_k1..z_kJ]`` in block k."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    K, J = z.shape
    F = np.zeros((K, K * (J + 1)))
    for k in range(K):
        F[k, k * (J + 1)] = 1.0
        F[k, k * (J + 1) + 1:(k + 1) * (J + 1)] = z[k]
    return F


def regressors(z_path: np.ndarray) -> np.ndarray:
    """(T, K, J) agent states -> (T, K, J+1) regressor blocks with leading ones."""
    T, K, J = z_path.shape
    G = np.ones((T, K, J + 1))
    G[:, :, 1:] = z_path
    return G


@dataclass(frozen=True)
class StateFilter:
    """Filtered coefficient moments for periods 0..T (row 0 is the prior).

    The covariance ``C`` is materialized on demand from the Cholesky factors
    of the filtered precisions.
    """

    m: np.ndarray
    chol_precision: np.ndarray
    discount: float
    repairs: int = 0

    @property
    def n_periods(self) -> int:
        return self.m.shape[0] - 1

    @property
    def C(self) -> np.ndarray:
        out = np.empty_like(self.chol_precision)
        for t, L in enumerate(self.chol_precision):
            Linv = np.linalg.solve(L, np.eye(L.shape[0]))
            out[t] = Linv.T @ Linv
        return out


@dataclass(frozen=True)
class VolatilityFilter:
    """Discounted Wishart moments: dof ``n``, sum-of-squares ``D``, point estimate ``S = D / n``."""

    n: np.ndarray
    D: np.ndarray
    discount: float

    @property
    def S(self) -> np.ndarray:
        return self.D / self.n[:, None, None]

    def wishart_dof(self) -> np.ndarray:
        K = self.D.shape[1]
        return self.n + K - 1


def forward_filter(config: DlmConfig, z_path: np.ndarray, data: np.ndarray,
                   V_path: np.ndarray) -> StateFilter:
    """Filter the coefficient path given agent states and observation covariances.

    Equivalent to a Kalman filter with ``R_t = C_{t-1} / e``; run in
    information form.
    """
    z_path = np.asarray(z_path, dtype=float)
    data = np.asarray(data, dtype=float)
    T, K, J = z_path.shape
    if data.shape != (T, K):
        raise DataError(f"data shape {data.shape} does not match agent states {(T, K)}")
    Phi = np.linalg.inv(np.asarray(V_path, dtype=float)) if T else np.zeros((0, K, K))
    return _filter_with_precision(config, regressors(z_path), data, Phi)


def _filter_with_precision(config: DlmConfig, G: np.ndarray, data: np.ndarray,
                           Phi: np.ndarray) -> StateFilter:
    T, K, J1 = G.shape
    m0 = config.m0(K, J1 - 1)
    P0 = np.linalg.inv(config.C0(K, J1 - 1))
    P0 = 0.5 * (P0 + P0.T)
    m, L, repairs = kern.info_filter(G, data, Phi, m0, P0, config.state_discount)
    return StateFilter(m, L, config.state_discount, int(repairs))


def volatility_filter(config: DlmConfig, resid: np.ndarray) -> VolatilityFilter:
    resid = np.atleast_2d(np.asarray(resid, dtype=float))
    K = resid.shape[1]
    D0 = config.prior_dof * config.S0(K)
    n, D = kern.vol_filter(resid, float(config.prior_dof), D0, config.vol_discount)
    return VolatilityFilter(n, D, config.vol_discount)


def bartlett_factors(dof: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Lower-triangular factors ``A`` with ``A A' ~ W(dof, I_K)``.

    Degrees of freedom at or below ``K - 1`` have no full-rank Wishart; they
    are rounded to an integer rank ``r`` and ``A`` carries ``r`` standard
    normal columns (a singular Wishart).
    """
    dof = np.atleast_1d(np.asarray(dof, dtype=float))
    Z = rng.standard_normal((dof.size, K, K))
    A = np.zeros_like(Z)
    full = dof > K - 1
    if full.any():
        idx = np.arange(K)
        sub = np.tril(Z[full], -1)
        sub[:, idx, idx] = np.sqrt(rng.chisquare(dof[full, None] - idx[None, :]))
        A[full] = sub
    for i in np.flatnonzero(~full):
        r = int(round(dof[i]))
        A[i, :, :r] = Z[i, :, :r]
    return A


def _vol_factor_dofs(vf: VolatilityFilter) -> np.ndarray:
    """Dof of the Bartlett factor needed at each index by ``sample_vol``."""
    h = vf.wishart_dof()
    T = h.size - 1
    dof = (1.0 - vf.discount) * h
    dof[T] = h[T]
    return dof


def sample_volatility(vf: VolatilityFilter, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Backward-sample observation precisions for periods 1..T; returns (T+1, K, K) and repairs."""
    K = vf.D.shape[1]
    A = bartlett_factors(_vol_factor_dofs(vf), K, rng)
    Phi, repairs = kern.sample_vol(vf.D, vf.discount, A)
    return Phi, int(repairs)


def backward_sample(filt: StateFilter, config: DlmConfig, rng: np.random.Generator,
                    z_path: np.ndarray, data: np.ndarray) -> DlmPosteriorDraw:
    """Joint draw of (beta_{1:T}, V_{1:T}).

    Coefficients are drawn backward from ``filt``; the covariance path is
    then drawn from its discount-Wishart conditional given the sampled
    coefficients' residuals.
    """
    T = filt.n_periods
    p = filt.m.shape[1]
    eps = rng.standard_normal((T + 1, p))
    beta = kern.sample_states(filt.m, filt.chol_precision, filt.discount, eps)
    if T == 0:
        K = np.asarray(data).shape[1] if np.ndim(data) == 2 else 0
        return DlmPosteriorDraw(beta[1:], np.zeros((0, K, K)), np.zeros((0, K, K)))
    G = regressors(np.asarray(z_path, dtype=float))
    resid = kern.residuals(G, np.asarray(data, dtype=float), beta)
    vf = volatility_filter(config, resid)
    Phi, _ = sample_volatility(vf, rng)
    return DlmPosteriorDraw(beta[1:], np.linalg.inv(Phi[1:]), Phi[1:])


def agent_state_conditional(beta_t: np.ndarray, V_t: np.ndarray, mean: np.ndarray,
                            sd: np.ndarray, x_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of vec(z_t) (asset-major, length KJ) given beta_t, V_t and x_t.

    ``mean`` and ``sd`` are J x K expert predictives. Precision form:
    ``P = D^{-1} + B' V^{-1} B``.
    """
    J, K = mean.shape
    J1 = J + 1
    B = np.zeros((K, K * J))
    c = np.empty(K)
    for k in range(K):
        c[k] = beta_t[k * J1]
        B[k, k * J:(k + 1) * J] = beta_t[k * J1 + 1:(k + 1) * J1]
    prior_mean = mean.T.reshape(-1)
    prior_prec = 1.0 / (sd.T.reshape(-1) ** 2)
    Vinv = np.linalg.inv(V_t)
    P = np.diag(prior_prec) + B.T @ Vinv @ B
    cov = np.linalg.inv(P)
    mu = cov @ (prior_prec * prior_mean + B.T @ Vinv @ (x_t - c))
    return mu, 0.5 * (cov + cov.T)


def sample_agent_states(draw: DlmPosteriorDraw, data: np.ndarray, mean: np.ndarray,
                        sd: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw z_{1:T} (T, K, J) from its Gaussian full conditional.

    ``mean`` and ``sd`` are the expert predictives for the same periods,
    shape (T, J, K).
    """
    data = np.asarray(data, dtype=float)
    T, J, K = mean.shape
    G = np.ones((T, K, J + 1))
    beta = np.vstack([np.zeros((1, draw.beta.shape[1])), draw.beta])
    eps1 = rng.standard_normal((T, K, J))
    eps2 = rng.standard_normal((T, K))
    kern.sample_agents(G, beta, draw.precision, data, mean, sd, eps1, eps2)
    return G[:, :, 1:].copy()
