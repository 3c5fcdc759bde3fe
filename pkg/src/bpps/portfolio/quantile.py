"""Tail-return maximization with a penalized loss-quantile bound on posterior-predictive draws."""

from __future__ import annotations

import numpy as np

from bpps.bps.dlm import PosteriorPredictive
from bpps.errors import DataError
from bpps.portfolio.configs import OptimizerConfig, QuantileConfig, pick_best
from bpps.portfolio.search import descend
from bpps.posterior_stats import order_index

QUANTILE_ITERS = 400
POLISH_STEPS = tuple(0.05 * 0.5 ** i for i in range(16))
POLISH_TOP = 3
SWEEP_ROUNDS = 10
SWEEP_RANDOM_DIRECTIONS = 24
SWEEP_POINTS = 256
# caps samples x grid points per line search so large draws get coarser lines
SWEEP_BUDGET = 65536


class QuantileObjective:
    """``CVoR_alpha(w'x) - penalty * max(0, VaR_beta(-w'x) - v0)`` with a subgradient.

    The quantiles are the same order statistics used by the posterior
    statistics module, evaluated on one shared set of draws.
    """

    def __init__(self, samples: np.ndarray, cfg: QuantileConfig):
        x = np.ascontiguousarray(samples, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise DataError(f"need a nonempty (S, K) sample matrix, got {x.shape}")
        self.x = x
        self.cfg = cfg
        S = x.shape[0]
        self.k_ret = order_index(cfg.alpha, S)
        self.k_loss = order_index(cfg.beta, S)

    def value_grad(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        r = self.x @ w
        q = np.partition(r, self.k_ret)[self.k_ret]
        tail = r >= q
        f = float(q + (r[tail] - q).mean())
        g = self.x[tail].mean(axis=0)
        if self.cfg.penalty > 0.0:
            loss = -r
            idx = np.argpartition(loss, self.k_loss)[self.k_loss]
            excess = float(loss[idx]) - self.cfg.v0
            if excess > 0.0:
                f -= self.cfg.penalty * excess
                g = g + self.cfg.penalty * self.x[idx]
        return f, g

    def __call__(self, w: np.ndarray) -> float:
        r = self.x @ np.asarray(w, dtype=float)
        q = np.partition(r, self.k_ret)[self.k_ret]
        f = float(q + (r[r >= q] - q).mean())
        if self.cfg.penalty > 0.0:
            # the k-th smallest loss is the (S-1-k)-th smallest return, negated
            k = r.size - 1 - self.k_loss
            excess = -float(np.partition(r, k)[k]) - self.cfg.v0
            f -= self.cfg.penalty * max(excess, 0.0)
        return f

    def along(self, w: np.ndarray, d: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Objective at ``w + t_i d`` for every step ``t_i``, evaluated in one batch."""
        R = (self.x @ w)[:, None] + (self.x @ d)[:, None] * t[None, :]
        S = R.shape[0]
        k = S - 1 - self.k_loss
        P = np.partition(R, sorted({self.k_ret, k}), axis=0)
        q = P[self.k_ret]
        tail = R >= q
        f = q + ((R - q) * tail).sum(axis=0) / tail.sum(axis=0)
        if self.cfg.penalty > 0.0:
            f -= self.cfg.penalty * np.maximum(-P[k] - self.cfg.v0, 0.0)
        return f

    def variance(self, w: np.ndarray) -> float:
        return float(np.var(self.x @ w))


def _starts(K: int, opt: OptimizerConfig) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([opt.seed, K]))
    starts = [np.full(K, 1.0 / K)]
    starts += list(rng.dirichlet(np.ones(K), size=opt.restarts)) if opt.restarts else []
    starts += list(np.eye(K))
    return starts


def solve_quantile(pp, cfg: QuantileConfig | None = None, opt: OptimizerConfig | None = None) -> np.ndarray:
    """Multi-start projected subgradient ascent of the penalized tail objective.

    Starts are the uniform portfolio, ``opt.restarts`` Dirichlet(1, ..., 1)
    draws seeded by ``opt.seed`` and every single-asset corner; the best
    local result wins, with ties broken by lower sample variance and then
    lexicographically. The best few local results are refined by exact
    line searches and a pairwise transfer polish before the comparison.
    """
    cfg = cfg or QuantileConfig()
    opt = opt or OptimizerConfig()
    samples = pp.samples if isinstance(pp, PosteriorPredictive) else pp
    obj = QuantileObjective(samples, cfg)
    K = obj.x.shape[1]

    def neg(w):
        f, g = obj.value_grad(w)
        return -f, -g

    iters = min(opt.max_iters, QUANTILE_ITERS)
    candidates = []
    for w0 in _starts(K, opt):
        w, f, _ = descend(neg, w0, iters, opt.step_tol, normalize=True)
        candidates.append((-f, obj.variance(w), w))
    candidates.sort(key=lambda c: -c[0])
    rng = np.random.default_rng(np.random.SeedSequence([opt.seed, K, 1]))
    for i, (f, _, w) in enumerate(candidates[:POLISH_TOP]):
        w, f = line_sweep(obj, w, f, rng)
        w, f = polish(obj, w, f)
        candidates[i] = (f, obj.variance(w), w)
    return pick_best(candidates, opt.obj_tol)[2]


def line_sweep(obj: QuantileObjective, w: np.ndarray, f: float,
               rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Grid line searches over the whole feasible chord along many simplex directions.

    Directions are every pairwise transfer plus fresh random zero-sum
    directions each round; the sweep stops after a round with no gain.
    The objective is piecewise smooth with ridges in arbitrary directions,
    so long chords escape the kinks that local steps stall on.
    """
    K = w.size
    n = int(np.clip(SWEEP_BUDGET // obj.x.shape[0], 32, SWEEP_POINTS))
    pairs = []
    for a in range(K):
        for b in range(a + 1, K):
            d = np.zeros(K)
            d[a], d[b] = 1.0, -1.0
            pairs.append(d)
    for _ in range(SWEEP_ROUNDS):
        G = rng.standard_normal((SWEEP_RANDOM_DIRECTIONS, K))
        G -= G.mean(axis=1, keepdims=True)
        improved = False
        for d in pairs + list(G):
            neg, pos = d < 0.0, d > 0.0
            hi = np.min(w[neg] / -d[neg]) if neg.any() else 0.0
            lo = -np.min(w[pos] / d[pos]) if pos.any() else 0.0
            if hi - lo <= 1e-15:
                continue
            t = np.linspace(lo, hi, n)
            vals = obj.along(w, d, t)
            i = int(np.argmax(vals))
            if vals[i] > f + 1e-12:
                trial = np.maximum(w + t[i] * d, 0.0)
                trial /= trial.sum()
                ft = obj(trial)
                if ft > f:
                    w, f, improved = trial, ft, True
        if not improved:
            break
    return w, f


def polish(obj: QuantileObjective, w: np.ndarray, f: float) -> tuple[np.ndarray, float]:
    """Pairwise mass-transfer search that can cross the kinks a subgradient step stalls on.

    For a shrinking sequence of transfer sizes, moves weight from one asset
    to another whenever that strictly raises the objective.
    """
    K = w.size
    w = w.copy()
    for delta in POLISH_STEPS:
        improved = True
        while improved:
            improved = False
            for b in range(K):
                if w[b] <= 0.0:
                    continue
                for a in range(K):
                    if a == b:
                        continue
                    d = min(delta, w[b])
                    trial = w.copy()
                    trial[a] += d
                    trial[b] -= d
                    ft = obj(trial)
                    if ft > f + 1e-15:
                        w, f = trial, ft
                        improved = True
                        if w[b] <= 0.0:
                            break
    return w, f
