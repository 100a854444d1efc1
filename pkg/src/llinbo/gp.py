"""Exact Gaussian-process regression on the unit hypercube.

Models are immutable: fitting and fantasy conditioning always return a new
:class:`GPModel`. Posterior quantities are for the latent function ``f``
(observation noise is not added to the predictive variance).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import qmc

DEFAULT_NOISE = 1e-6
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_VARIANCE_BOUNDS = (1e-3, 1e3)
JITTER_START = 1e-10
JITTER_MAX = 1e-4
MLE_STARTS = 8

_SQRT5 = math.sqrt(5.0)


class GPFitError(RuntimeError):
    """Raised when ``K + noise*I`` cannot be factorized even with jitter."""


class KernelFamily(str, enum.Enum):
    MATERN52 = "Matern52ARD"
    RBF = "RBFARD"


def as_design(x, dim: int | None = None) -> np.ndarray:
    """Validate a single design and return it as a float vector."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"design must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"design has dimension {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"design {arr.tolist()} is not inside [0, 1]^D")
    return arr


def _as_points(X, dim: int) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Ordered observations ``(x_i, y_i)`` sharing one dimension."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError("Dataset.X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise ValueError("Dataset.X and Dataset.y lengths differ")
        if not np.all(np.isfinite(y)):
            raise ValueError("outcomes must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Sequence[float], float]], dim: int | None = None) -> "Dataset":
        pairs = list(pairs)
        if not pairs:
            if dim is None:
                raise ValueError("dimension required for an empty dataset")
            return cls.empty(dim)
        X = np.array([as_design(x, dim) for x, _ in pairs])
        return cls(X, np.array([float(y) for _, y in pairs]))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        for x, y in zip(self.X, self.y):
            yield x, float(y)

    def append(self, x, y: float) -> "Dataset":
        x = as_design(x, self.dim)
        return Dataset(np.vstack([self.X, x[None, :]]), np.append(self.y, float(y)))


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    mean_constant: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.array(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be strictly positive")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be strictly positive")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "family", KernelFamily(self.family))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "lengthscales": self.lengthscales.tolist(),
            "signal_variance": float(self.signal_variance),
            "mean_constant": float(self.mean_constant),
        }


def _scaled_sqdist(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    diff = (A[:, None, :] - B[None, :, :]) / lengthscales
    return (diff * diff).sum(-1)


def _kernel_from_sqdist(family: KernelFamily, sq: np.ndarray, signal_variance: float) -> np.ndarray:
    if family is KernelFamily.RBF:
        return signal_variance * np.exp(-0.5 * sq)
    r = np.sqrt(sq)
    return signal_variance * (1.0 + _SQRT5 * r + (5.0 / 3.0) * sq) * np.exp(-_SQRT5 * r)


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    A = _as_points(A, spec.dim)
    B = _as_points(B, spec.dim)
    return _kernel_from_sqdist(spec.family, _scaled_sqdist(A, B, spec.lengthscales), spec.signal_variance)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Kernel value ``k(a, b)`` for two single designs."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != spec.dim or b.size != spec.dim:
        raise ValueError(f"kernel of dimension {spec.dim} got designs of size {a.size} and {b.size}")
    sq = float((((a - b) / spec.lengthscales) ** 2).sum())
    return float(_kernel_from_sqdist(spec.family, np.array(sq), spec.signal_variance))


@dataclass(frozen=True)
class GPModel:
    """A fitted GP: hyperparameters, data and the factorized Gram matrix.

    ``chol`` is the lower Cholesky factor of ``K + (noise_variance + jitter) I``
    and ``alpha`` solves that system against the mean-centred outcomes.
    """

    spec: KernelSpec
    noise_variance: float
    data: Dataset
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n(self) -> int:
        return len(self.data)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at a batch of points ``(m, D)``."""
        X = _as_points(X, self.dim)
        prior_var = np.full(X.shape[0], self.spec.signal_variance)
        if self.n == 0:
            return np.full(X.shape[0], float(self.spec.mean_constant)), prior_var
        Ks = kernel_matrix(self.spec, self.data.X, X)
        mean = self.spec.mean_constant + Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        var = prior_var - (v * v).sum(0)
        return mean, np.maximum(var, 0.0)

    def mean(self, X) -> np.ndarray:
        return self.predict(X)[0]

    def variance(self, X) -> np.ndarray:
        return self.predict(X)[1]

    def summary(self) -> dict:
        return {**self.spec.to_dict(), "n": self.n, "noise_variance": float(self.noise_variance), "jitter": self.jitter}


PosteriorBelief = GPModel


def _factorize(K: np.ndarray, noise_variance: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    eye = np.eye(n)
    try:
        return np.linalg.cholesky(K + noise_variance * eye), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + (noise_variance + jitter) * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GPFitError(f"K + noise*I is not positive definite for n={n} even with jitter {JITTER_MAX:g}")


def _condition(spec: KernelSpec, noise_variance: float, data: Dataset) -> GPModel:
    if len(data) == 0:
        return GPModel(spec, noise_variance, data, np.zeros((0, 0)), np.zeros(0))
    K = kernel_matrix(spec, data.X, data.X)
    L, jitter = _factorize(K, noise_variance)
    alpha = cho_solve((L, True), data.y - spec.mean_constant, check_finite=False)
    return GPModel(spec, noise_variance, data, L, alpha, jitter)


# --- hyperparameter fitting -------------------------------------------------


class _MarginalLikelihood:
    """Negative log marginal likelihood with the constant mean profiled out.

    Parameters are ``log(lengthscales) + [log(signal_variance)]`` and are
    evaluated in batches of shape ``(B, D + 1)``. For fixed kernel parameters
    the maximizing constant is the GLS estimate ``1'K^-1 y / 1'K^-1 1``.
    """

    def __init__(self, family: KernelFamily, X: np.ndarray, y: np.ndarray, noise_variance: float):
        self.family = family
        self.y = y
        self.noise_variance = noise_variance
        self.diff2 = (X[:, None, :] - X[None, :, :]) ** 2
        self.n = X.shape[0]
        self.rhs = np.stack([y, np.ones(self.n)], axis=1)

    def _gram(self, theta: np.ndarray) -> np.ndarray:
        inv_ls2 = np.exp(-2.0 * theta[:, :-1])
        sq = np.moveaxis(np.tensordot(self.diff2, inv_ls2, axes=([2], [1])), -1, 0)
        sv = np.exp(theta[:, -1])[:, None, None]
        return _kernel_from_sqdist(self.family, sq, 1.0) * sv + self.noise_variance * np.eye(self.n)

    def __call__(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.atleast_2d(theta)
        K = self._gram(theta)
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            nll, m = np.empty(len(theta)), np.empty(len(theta))
            for i, Ki in enumerate(K):
                nll[i], m[i] = self._single(Ki)
            return nll, m
        sol = np.linalg.solve(K, np.broadcast_to(self.rhs, (len(theta),) + self.rhs.shape))
        Ky, K1 = sol[..., 0], sol[..., 1]
        m = Ky.sum(1) / K1.sum(1)
        quad = (self.y[None] * Ky).sum(1) - m * Ky.sum(1)
        logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(1)
        return 0.5 * quad + logdet + 0.5 * self.n * math.log(2 * math.pi), m

    def _single(self, K: np.ndarray) -> tuple[float, float]:
        try:
            L, _ = _factorize(K - self.noise_variance * np.eye(self.n), self.noise_variance)
        except GPFitError:
            return math.inf, 0.0
        sol = cho_solve((L, True), self.rhs, check_finite=False)
        Ky, K1 = sol[:, 0], sol[:, 1]
        m = float(Ky.sum() / K1.sum())
        quad = float(self.y @ Ky - m * Ky.sum())
        return 0.5 * quad + float(np.log(np.diag(L)).sum()) + 0.5 * self.n * math.log(2 * math.pi), m


def _compass_search(fun, starts, lower, upper, step=1.0, min_step=1e-3, max_rounds=100, ftol=1e-4):
    """Batched compass search (minimization) run from several starts in lockstep.

    Each round evaluates all 2P axis moves of every still-active start in one
    call; a start moves to its best improving neighbour, or halves its step
    when nothing improves by more than ``ftol``.
    Returns the best ``(x, f(x))`` over all starts.
    """
    X = np.clip(np.asarray(starts, dtype=float), lower, upper)
    S, P = X.shape
    fx = np.asarray(fun(X), dtype=float)
    steps = np.full(S, float(step))
    idx = np.arange(P)
    for _ in range(max_rounds):
        active = np.flatnonzero(steps >= min_step)
        if active.size == 0:
            break
        nb = np.repeat(X[active], 2 * P, axis=0).reshape(active.size, 2 * P, P)
        nb[:, 2 * idx, idx] += steps[active, None]
        nb[:, 2 * idx + 1, idx] -= steps[active, None]
        nb = np.clip(nb, lower, upper)
        vals = np.asarray(fun(nb.reshape(-1, P)), dtype=float).reshape(active.size, 2 * P)
        j = vals.argmin(1)
        best = vals[np.arange(active.size), j]
        better = best < fx[active] - ftol
        moved = active[better]
        X[moved] = nb[better, j[better]]
        fx[moved] = best[better]
        steps[active[~better]] *= 0.5
    k = int(np.argmin(fx))
    return X[k], float(fx[k])


def _fit_mle(data: Dataset, noise_variance: float, family: KernelFamily) -> KernelSpec:
    D = data.dim
    lml = _MarginalLikelihood(family, data.X, data.y, noise_variance)
    lower = np.array([math.log(LENGTHSCALE_BOUNDS[0])] * D + [math.log(SIGNAL_VARIANCE_BOUNDS[0])])
    upper = np.array([math.log(LENGTHSCALE_BOUNDS[1])] * D + [math.log(SIGNAL_VARIANCE_BOUNDS[1])])

    # first start is a fixed sensible default, the rest a fixed Sobol scatter
    sobol = qmc.Sobol(D + 1, scramble=True, seed=0).random(MLE_STARTS)
    starts = np.vstack([[math.log(0.5)] * D + [0.0], lower + sobol[: MLE_STARTS - 1] * (upper - lower)])

    def objective(theta):
        nll = lml(theta)[0]
        return np.where(np.isfinite(nll), nll, np.inf)

    theta, val = _compass_search(objective, starts, lower, upper)
    if not math.isfinite(val):
        raise GPFitError("marginal likelihood could not be evaluated at any start")
    m = float(lml(theta)[1][0])
    return KernelSpec(family, np.exp(theta[:-1]), float(np.exp(theta[-1])), m)


def fit_gp(
    data: Dataset,
    noise_variance: float = DEFAULT_NOISE,
    spec: KernelSpec | None = None,
    *,
    family: KernelFamily = KernelFamily.MATERN52,
    standardize: bool = True,
) -> GPModel:
    """Condition a GP on ``data``.

    With ``spec`` given the hyperparameters are used as-is. Otherwise they are
    chosen by maximizing the log marginal likelihood (8-start compass search
    on log-parameters, constant mean profiled out).

    When fitting by MLE with ``standardize=True`` the search runs on
    standardized outcomes, so the bounds and ``noise_variance`` are in units of
    the outcome variance; the returned model is mapped back to the raw scale.
    """
    if not noise_variance > 0:
        raise ValueError("noise_variance must be positive")
    if spec is not None:
        if spec.dim != data.dim:
            raise ValueError(f"kernel dimension {spec.dim} does not match data dimension {data.dim}")
        return _condition(spec, noise_variance, data)
    if len(data) == 0:
        raise ValueError("maximum-likelihood fitting needs at least one observation")

    shift, scale = 0.0, 1.0
    if standardize and len(data) > 1:
        shift = float(data.y.mean())
        scale = float(data.y.std())
        if not scale > 0:
            scale = 1.0
    scaled = Dataset(data.X, (data.y - shift) / scale)
    fitted = _fit_mle(scaled, noise_variance, family)
    raw = KernelSpec(
        family,
        fitted.lengthscales,
        fitted.signal_variance * scale**2,
        shift + scale * fitted.mean_constant,
    )
    return _condition(raw, noise_variance * scale**2, data)


def posterior(model: GPModel, x) -> tuple[float, float]:
    """Posterior ``(mean, variance)`` of ``f`` at a single design."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.dim:
        raise ValueError(f"design has dimension {x.size}, model expects {model.dim}")
    m, v = model.predict(x[None, :])
    return float(m[0]), float(v[0])


def sample_at(model: GPModel, x, count: int, rng_seed: int) -> list[float]:
    """Independent draws from the posterior marginal of ``f(x)``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    m, v = posterior(model, x)
    rng = np.random.default_rng(rng_seed)
    return (m + math.sqrt(v) * rng.standard_normal(count)).tolist()


def _extend_cholesky(model: GPModel, x_new: np.ndarray) -> np.ndarray | None:
    n = model.n
    if n == 0:
        d2 = model.spec.signal_variance + model.noise_variance + model.jitter
        return np.array([[math.sqrt(d2)]])
    k = kernel_matrix(model.spec, model.data.X, x_new[None, :])[:, 0]
    row = solve_triangular(model.chol, k, lower=True, check_finite=False)
    d2 = model.spec.signal_variance + model.noise_variance + model.jitter - float(row @ row)
    if not d2 > 1e-14 * model.spec.signal_variance:
        return None
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = model.chol
    L[n, :n] = row
    L[n, n] = math.sqrt(d2)
    return L


def fantasy_models(model: GPModel, x_new, outcomes: Sequence[float]) -> list[GPModel]:
    """Fantasy models for several imagined outcomes at one design.

    All returned models share the extended factor (and hence the posterior
    variance); only ``alpha`` depends on the imagined outcome.
    """
    x_new = as_design(x_new, model.dim)
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1)
    if outcomes.size == 0:
        return []
    X_aug = np.vstack([model.data.X, x_new[None, :]])
    L = _extend_cholesky(model, x_new)
    jitter = model.jitter
    if L is None:
        # duplicate of an existing design: fall back to the escalating path
        K = kernel_matrix(model.spec, X_aug, X_aug)
        L, extra = _factorize(K + model.jitter * np.eye(len(X_aug)), model.noise_variance)
        jitter += extra
    L.setflags(write=False)
    Y = np.empty((len(X_aug), outcomes.size))
    Y[:-1] = model.data.y[:, None]
    Y[-1] = outcomes
    alphas = cho_solve((L, True), Y - model.spec.mean_constant, check_finite=False)
    out = []
    for j, y in enumerate(outcomes):
        data = Dataset(X_aug, np.append(model.data.y, y))
        out.append(GPModel(model.spec, model.noise_variance, data, L, alphas[:, j].copy(), jitter))
    return out


def fantasy_update(model: GPModel, x_new, y_imagined: float) -> GPModel:
    """Condition on one imagined observation, keeping hyperparameters fixed."""
    return fantasy_models(model, x_new, [y_imagined])[0]


def with_data(model: GPModel, data: Dataset) -> GPModel:
    """Refactorize ``model``'s hyperparameters against new data (no refit)."""
    return _condition(model.spec, model.noise_variance, data)


__all__ = [
    "DEFAULT_NOISE",
    "Dataset",
    "GPFitError",
    "GPModel",
    "KernelFamily",
    "KernelSpec",
    "PosteriorBelief",
    "as_design",
    "fantasy_models",
    "fantasy_update",
    "fit_gp",
    "kernel_eval",
    "kernel_matrix",
    "posterior",
    "sample_at",
    "with_data",
]
