"""UCB and constrained Monte-Carlo UCB, plus their maximization over [0, 1]^D."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .gp import GPModel, as_design, fantasy_models, kernel_matrix, sample_at

Acquisition = Callable[[np.ndarray], np.ndarray]

TIE_TOL = 1e-12
MIN_BUDGET = 64
N_REFINE_STARTS = 4
POLISH_STEP = 1e-3


def default_budget(dim: int) -> int:
    return 4096 if dim <= 2 else 4096 * dim


@dataclass(frozen=True)
class BetaSchedule:
    """Exploration weight ``beta_t`` for UCB.

    ``mode`` is one of ``"practical"`` (``2 ln(t D pi^2 / (6 delta))``),
    ``"constant"`` or ``"theoretical"``. The theoretical mode needs a norm
    bound ``B``, a sub-Gaussian noise constant ``R`` and an information-gain
    bound ``gamma`` supplied by the caller; with ``samples`` set it returns the
    inflated weight used for the constrained posterior.
    """

    dim: int
    mode: str = "practical"
    delta: float = 0.1
    value: float = 1.0
    B: float = 1.0
    R: float = 0.0
    gamma: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if self.mode not in ("practical", "constant", "theoretical"):
            raise ValueError(f"unknown beta mode {self.mode!r}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.mode == "constant" and not self.value > 0:
            raise ValueError("constant beta must be positive")

    def __call__(self, t: int, samples: int | None = None) -> float:
        if t < 1:
            raise ValueError("iteration index starts at 1")
        if self.mode == "constant":
            return float(self.value)
        if self.mode == "practical":
            return 2.0 * math.log(t * self.dim * math.pi**2 / (6.0 * self.delta))
        if samples is None:
            return self.B + self.R * math.sqrt(2.0 * (self.gamma + 1.0 + math.log(1.0 / self.delta)))
        T = max(self.horizon, t)
        return (
            2.0 * self.B
            + 2.0 * self.R * math.sqrt(2.0 * (self.gamma + 1.0 + math.log(4.0 * T / self.delta)))
            + math.sqrt(2.0 * math.log(4.0 * max(samples, 1) * T / self.delta))
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("dim", "mode", "delta", "value", "B", "R", "gamma", "horizon")}


def ucb(belief: GPModel, x, beta_t: float) -> np.ndarray | float:
    """``mean + beta_t * std``; accepts one design or a batch of shape ``(m, D)``."""
    if beta_t < 0:
        raise ValueError("beta_t must be non-negative")
    X = np.asarray(x, dtype=float)
    mean, var = belief.predict(X)
    val = mean + beta_t * np.sqrt(var)
    return float(val[0]) if X.ndim == 1 else val


@dataclass(frozen=True)
class AcquisitionResult:
    argmax: np.ndarray
    value: float
    evaluations: int


def _best_index(X: np.ndarray, vals: np.ndarray) -> int:
    top = vals.max()
    tied = np.flatnonzero(vals >= top - TIE_TOL)
    if tied.size == 1:
        return int(tied[0])
    # lexicographic: first coordinate is the primary key
    order = np.lexsort(X[tied].T[::-1])
    return int(tied[order[0]])


class _Counter:
    def __init__(self, af: Acquisition):
        self.af = af
        self.evaluations = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.af(X), dtype=float).reshape(-1)
        self.evaluations += X.shape[0]
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"acquisition is not finite ({vals[i]}) at design {X[i].tolist()}")
        return vals


def _neighbours(x: np.ndarray, step: float) -> np.ndarray:
    D = x.size
    nb = np.repeat(x[None, :], 2 * D, axis=0)
    idx = np.arange(D)
    nb[2 * idx, idx] += step
    nb[2 * idx + 1, idx] -= step
    return np.clip(nb, 0.0, 1.0)


def _pattern_search(f: _Counter, x, fx, budget, step=0.0625, min_step=1e-6):
    """Compass search: move to the best improving axis neighbour, else halve."""
    spent = 0
    while step >= min_step and spent + 2 * x.size <= budget:
        nb = _neighbours(x, step)
        vals = f(nb)
        spent += nb.shape[0]
        j = _best_index(nb, vals)
        if vals[j] > fx:
            x, fx = nb[j], float(vals[j])
        else:
            step *= 0.5
    return x, fx


def _polish(f: _Counter, x, fx, max_rounds=50):
    # local-max check at a fixed step; keeps moving while a neighbour improves
    for _ in range(max_rounds):
        nb = _neighbours(x, POLISH_STEP)
        vals = f(nb)
        j = _best_index(nb, vals)
        if vals[j] <= fx:
            break
        x, fx = _pattern_search(f, nb[j], float(vals[j]), budget=40 * x.size, step=POLISH_STEP)
    return x, fx


def maximize_acquisition(af: Acquisition, dim: int, budget: int | None = None, rng_seed: int = 0) -> AcquisitionResult:
    """Maximize a batched acquisition over the unit hypercube.

    A scrambled Sobol scatter uses half the budget; compass search refines the
    four best scatter points with the rest. A final fixed-step check makes the
    returned point a local maximum at step 1e-3, which may spend a few
    evaluations beyond ``budget``.
    """
    budget = default_budget(dim) if budget is None else int(budget)
    if budget < MIN_BUDGET:
        raise ValueError(f"budget must be at least {MIN_BUDGET}")
    f = _Counter(af)
    n_scatter = math.ceil(budget / 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two sample sizes
        X0 = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(rng_seed)).random(n_scatter)
    v0 = f(X0)

    order = np.lexsort(np.vstack([X0.T[::-1], -v0]))
    starts = []
    for i in order:
        if all(np.any(X0[i] != X0[j]) for j in starts):
            starts.append(i)
        if len(starts) == N_REFINE_STARTS:
            break
    per_start = (budget - n_scatter) // max(len(starts), 1)

    cands, vals = [X0[_best_index(X0, v0)]], [float(v0.max())]
    for i in starts:
        x, fx = _pattern_search(f, X0[i].copy(), float(v0[i]), per_start)
        cands.append(x)
        vals.append(fx)
    C, V = np.array(cands), np.array(vals)
    k = _best_index(C, V)
    x, fx = _polish(f, C[k], float(V[k]))
    return AcquisitionResult(np.asarray(x, dtype=float), float(fx), f.evaluations)


def kappa(belief: GPModel, dim: int | None = None, budget: int | None = None, rng_seed: int = 0) -> float:
    """Largest posterior mean over the domain."""
    dim = belief.dim if dim is None else dim
    if belief.n == 0:
        return float(belief.spec.mean_constant)
    return maximize_acquisition(belief.mean, dim, budget, rng_seed).value


@dataclass(frozen=True)
class ConstrainedPosterior:
    """The GP conditioned (by rejection sampling) on ``f(x_llm) > kappa``.

    ``retained_models`` holds one fantasy model per accepted draw, in draw
    order; ``draws`` keeps every raw draw for diagnostics.
    """

    base: GPModel
    retained_models: list[GPModel]
    x_llm: np.ndarray
    kappa: float
    draws: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def retained_count(self) -> int:
        return len(self.retained_models)

    @property
    def retained_outcomes(self) -> np.ndarray:
        return np.array([m.data.y[-1] for m in self.retained_models])

    def _shares_structure(self) -> bool:
        first = self.retained_models[0]
        return all(
            m.chol is first.chol and m.spec is first.spec and m.data.X.shape == first.data.X.shape
            for m in self.retained_models
        )

    def moments(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mean of fantasy means, shared fantasy variance and spread of fantasy means."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        models = self.retained_models
        m = len(models)
        if m == 0:
            mean, var = self.base.predict(X)
            return mean, var, np.zeros_like(mean)
        first = models[0]
        _, var_plus = first.predict(X)
        if self._shares_structure():
            # mu_s(x) = c + k(x)' alpha_s, so the spread reduces to k' Cov(alpha) k
            A = np.stack([mm.alpha for mm in models], axis=1)
            Ks = kernel_matrix(first.spec, first.data.X, X)
            mean = first.spec.mean_constant + Ks.T @ A.mean(1)
            if m >= 2:
                C = np.cov(A, ddof=1)
                KsT = Ks.T
                spread = np.maximum(((KsT @ np.atleast_2d(C)) * KsT).sum(1), 0.0)
            else:
                spread = np.zeros(X.shape[0])
            return mean, var_plus, spread
        means = np.stack([mm.predict(X)[0] for mm in models])
        spread = means.var(0, ddof=1) if m >= 2 else np.zeros(X.shape[0])
        return means.mean(0), var_plus, spread


def build_constrained(model: GPModel, x_llm, kappa_value: float, samples: int, rng_seed: int) -> ConstrainedPosterior:
    """Draw ``samples`` values of ``f(x_llm)`` and keep those above ``kappa_value``."""
    if samples < 0:
        raise ValueError("sample count must be non-negative")
    x_llm = as_design(x_llm, model.dim)
    draws = np.asarray(sample_at(model, x_llm, samples, rng_seed))
    kept = draws[draws > kappa_value]
    retained = fantasy_models(model, x_llm, kept)
    return ConstrainedPosterior(model, retained, x_llm, float(kappa_value), draws)


def cgp_ucb(cp: ConstrainedPosterior, x, beta_tilde: float) -> np.ndarray | float:
    """Monte-Carlo UCB over the constrained posterior (law of total variance).

    Falls back to plain UCB on the base posterior when no draw was retained.
    """
    if beta_tilde < 0:
        raise ValueError("beta_tilde must be non-negative")
    if cp.retained_count == 0:
        return ucb(cp.base, x, beta_tilde)
    X = np.asarray(x, dtype=float)
    mean, var, spread = cp.moments(X)
    val = mean + beta_tilde * np.sqrt(var + spread)
    return float(val[0]) if X.ndim == 1 else val


__all__ = [
    "AcquisitionResult",
    "BetaSchedule",
    "ConstrainedPosterior",
    "build_constrained",
    "cgp_ucb",
    "default_budget",
    "kappa",
    "maximize_acquisition",
    "ucb",
]
