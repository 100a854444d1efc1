"""Benchmark objectives on [0, 1]^D, negated so that larger is better.

Levy, Rastrigin, Branin and Bukin are written directly in their maximization
form, keeping the non-standard constants of the experimental setup
(Rastrigin's -12, the one-term Levy sum). Hartmann and Ackley are given in
their usual minimization form and negated here; Ackley keeps its unscaled
input, so its optimum sits at the origin corner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import constants

HARTMANN_A = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN_ALPHA = np.array(
    [
        [10.0, 3.0, 17.0, 3.5],
        [0.05, 10.0, 17.0, 0.1],
        [3.0, 3.5, 1.7, 10.0],
        [17.0, 8.0, 0.05, 10.0],
    ]
)
HARTMANN_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124],
        [2329, 4135, 8307, 3736],
        [2348, 1451, 3522, 2883],
        [4047, 8828, 8732, 5743],
    ]
)


def levy2(X: np.ndarray) -> np.ndarray:
    w = 1.0 + (X - 0.5) / 4.0
    w1, w2 = w[:, 0], w[:, 1]
    return (
        -np.sin(np.pi * w1) ** 2
        - (w1 - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w1 + 1.0) ** 2)
        - (w2 - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w2) ** 2)
    )


def rastrigin2(X: np.ndarray) -> np.ndarray:
    Z = 10.24 * X - 5.0
    return -12.0 - (Z**2 - 10.0 * np.cos(2.0 * np.pi * Z)).sum(1)


def branin2(X: np.ndarray) -> np.ndarray:
    x1 = 15.0 * X[:, 0] - 5.0
    x2 = 15.0 * X[:, 1]
    return (
        -((x2 - 5.1 / (4.0 * np.pi**2) * x1**2 + 5.0 / np.pi * x1 - 6.0) ** 2)
        - 10.0 * (1.0 - 1.0 / (8.0 * np.pi)) * np.cos(x1)
        - 10.0
    )


def bukin2(X: np.ndarray) -> np.ndarray:
    x1 = 20.0 * X[:, 0] - 15.0
    x2 = 6.0 * X[:, 1] - 3.0
    return -100.0 * np.sqrt(np.abs(x2 - 0.01 * x1**2)) - 0.01 * np.abs(x1 + 10.0)


def hartmann4(X: np.ndarray) -> np.ndarray:
    inner = (HARTMANN_ALPHA[None, :, :] * (X[:, None, :] - HARTMANN_P[None, :, :]) ** 2).sum(-1)
    return (HARTMANN_A[None, :] * np.exp(-inner)).sum(1)


def ackley6(X: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    return -(
        -20.0 * np.exp(-0.2 * np.sqrt((X**2).sum(1) / d))
        - np.exp(np.cos(2.0 * np.pi * X).sum(1) / d)
        + 20.0
        + np.e
    )


FUNCTION_PATTERNS = {
    "Levy2": "highly multimodal but with a unique global maximum.",
    "Rastrigin2": "which is highly multimodal, non-convex function with a large number of regularly spaced local minima.",
    "Branin2": "smooth, multimodal benchmark with three global maxima",
    "Bukin2": "steep, narrow, and highly non-convex landscape with a sharp valley and a unique global maximum",
    "Hartmann4": (
        "4-dimensional, non-convex, multi-modal and is composed of weighted, anisotropic Gaussian-like bumps "
        "centered at different points, making it highly non-separable and challenging to optimize."
    ),
    "Ackley6": (
        "6-dimensional, non-convex, and multi-modal. The function exhibits a nearly flat outer region and a large "
        "hole at the center, resulting in many local optima surrounding a single global optimum. It is highly "
        "symmetric and separable in nature, but optimization is still challenging due to the numerous local maxima."
    ),
}

_FORMULAS: dict[str, tuple[int, Callable[[np.ndarray], np.ndarray]]] = {
    "Levy2": (2, levy2),
    "Rastrigin2": (2, rastrigin2),
    "Branin2": (2, branin2),
    "Bukin2": (2, bukin2),
    "Hartmann4": (4, hartmann4),
    "Ackley6": (6, ackley6),
}

NAMES = tuple(_FORMULAS)


@dataclass(frozen=True)
class BenchmarkFunction:
    name: str
    dim: int
    formula: Callable[[np.ndarray], np.ndarray]
    known_max: float
    argmax: tuple[float, ...]
    description_card: str

    def batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"{self.name} expects points of dimension {self.dim}, got shape {X.shape}")
        return self.formula(X)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size != self.dim:
            raise ValueError(f"{self.name} expects a design of dimension {self.dim}, got shape {x.shape}")
        return float(self.formula(x[None, :])[0])


def get_benchmark(name: str) -> BenchmarkFunction:
    try:
        dim, formula = _FORMULAS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {', '.join(NAMES)}") from None
    known = constants.KNOWN_MAX[name]
    return BenchmarkFunction(name, dim, formula, known["value"], tuple(known["argmax"]), FUNCTION_PATTERNS[name])


def eval_benchmark(name: str, x) -> float:
    return get_benchmark(name)(x)
