"""Collaboration mechanisms deciding between the GP and the agent's suggestion.

Every step takes a single integer ``rng_seed``. The acquisition search always
uses that seed directly, so a mechanism that degenerates to plain UCB picks
exactly the design :func:`ucb_step` would. Auxiliary randomness (Bernoulli
draws, kappa search, posterior sampling) comes from :func:`derive_seed`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .acquisition import (
    BetaSchedule,
    build_constrained,
    cgp_ucb,
    kappa,
    maximize_acquisition,
    ucb,
)
from .gp import GPModel, as_design


class Source(str, enum.Enum):
    GP = "FromGP"
    LLM = "FromLLM"
    CGP = "FromCGP"


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of non-negative integers.

    ``derive_seed(root, replication, iteration, purpose)`` is the splitting
    rule used throughout: the tuple is fed to :class:`numpy.random.SeedSequence`
    (first key as entropy, the rest as spawn key) and the first generated
    64-bit word, shifted to 63 bits, is the seed.
    """
    ss = np.random.SeedSequence(entropy=int(keys[0]), spawn_key=tuple(int(k) for k in keys[1:]))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# purpose codes for derive_seed
BERNOULLI = 1
KAPPA = 2
SAMPLING = 3


def default_p(horizon: int) -> Callable[[int], float]:
    return lambda t: min(t * t / horizon, 1.0)


def default_samples(t: int) -> int:
    return max(int(math.floor(1e4 / (t * t))), 0)


@dataclass
class Schedules:
    """Per-iteration knobs of the three mechanisms.

    ``psi`` defaults to ``sigma0 / t`` where ``sigma0`` is the posterior
    standard deviation at the first agent suggestion; the run loop records it
    via :meth:`capture_sigma0` at ``t = 1``.
    """

    horizon: int
    beta: BetaSchedule
    p: Callable[[int], float] | None = None
    psi: Callable[[int], float] | None = None
    samples: Callable[[int], int] = default_samples
    beta_tilde: Callable[[int, int], float] | None = None
    sigma0: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.p is None:
            self.p = default_p(self.horizon)

    def p_t(self, t: int) -> float:
        return float(self.p(t))

    def psi_t(self, t: int) -> float:
        if self.psi is not None:
            return float(self.psi(t))
        if self.sigma0 is None:
            raise RuntimeError("sigma0 has not been captured; call capture_sigma0 at t=1")
        return self.sigma0 / t

    def S_t(self, t: int) -> int:
        return int(self.samples(t))

    def beta_t(self, t: int) -> float:
        return self.beta(t)

    def beta_tilde_t(self, t: int) -> float:
        if self.beta_tilde is not None:
            return float(self.beta_tilde(t, self.S_t(t)))
        return self.beta(t)

    def capture_sigma0(self, belief: GPModel, x_llm) -> float:
        if self.sigma0 is None:
            self.sigma0 = math.sqrt(float(belief.variance(np.asarray(x_llm, dtype=float))[0]))
        return self.sigma0


@dataclass
class MechanismDecision:
    chosen: np.ndarray
    source: Source
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"chosen": self.chosen.tolist(), "source": self.source.value, "diagnostics": dict(self.diagnostics)}


def ucb_step(belief: GPModel, t: int, sched: Schedules, rng_seed: int, budget: int | None = None) -> MechanismDecision:
    """Plain GP-UCB choice: the baseline every mechanism reduces to."""
    beta = sched.beta_t(t)
    res = maximize_acquisition(lambda X: ucb(belief, X, beta), belief.dim, budget, rng_seed)
    return MechanismDecision(res.argmax, Source.GP, {"af_max": res.value, "beta": beta})


def transient_step(
    belief: GPModel,
    x_llm,
    t: int,
    sched: Schedules,
    rng_seed: int,
    budget: int | None = None,
    x_gp=None,
) -> MechanismDecision:
    """Follow the GP with probability ``p_t``, otherwise the agent.

    ``x_gp`` may carry a precomputed UCB maximizer; it is only searched for
    when the coin says so.
    """
    if t < 1:
        raise ValueError("t starts at 1")
    x_llm = as_design(x_llm, belief.dim)
    p = sched.p_t(t)
    z = bool(np.random.default_rng(derive_seed(rng_seed, BERNOULLI)).random() < p)
    diag = {"p_t": p, "bernoulli_draw": int(z)}
    if not z:
        return MechanismDecision(x_llm.copy(), Source.LLM, diag)
    if x_gp is None:
        dec = ucb_step(belief, t, sched, rng_seed, budget)
        dec.diagnostics.update(diag)
        return dec
    return MechanismDecision(as_design(x_gp, belief.dim), Source.GP, diag)


def justify_step(
    belief: GPModel,
    x_llm,
    t: int,
    sched: Schedules,
    rng_seed: int,
    budget: int | None = None,
) -> MechanismDecision:
    """Accept the agent's design iff its UCB is within ``psi_t`` of the UCB max.

    Equality at the boundary rejects.
    """
    if t < 1:
        raise ValueError("t starts at 1")
    x_llm = as_design(x_llm, belief.dim)
    beta = sched.beta_t(t)
    psi = sched.psi_t(t)
    res = maximize_acquisition(lambda X: ucb(belief, X, beta), belief.dim, budget, rng_seed)
    af_llm = ucb(belief, x_llm, beta)
    gap = res.value - af_llm
    diag = {"af_max": res.value, "af_llm": af_llm, "af_gap": gap, "psi_t": psi, "beta": beta}
    if af_llm > res.value - psi:
        return MechanismDecision(x_llm.copy(), Source.LLM, diag)
    return MechanismDecision(res.argmax, Source.GP, diag)


def constrained_step(
    model: GPModel,
    x_llm,
    t: int,
    sched: Schedules,
    rng_seed: int,
    budget: int | None = None,
) -> MechanismDecision:
    """Maximize CGP-UCB over the GP conditioned on ``f(x_llm) > kappa``."""
    if t < 1:
        raise ValueError("t starts at 1")
    x_llm = as_design(x_llm, model.dim)
    S = sched.S_t(t)
    k = kappa(model, model.dim, budget, derive_seed(rng_seed, KAPPA))
    cp = build_constrained(model, x_llm, k, S, derive_seed(rng_seed, SAMPLING))
    beta = sched.beta_tilde_t(t)
    res = maximize_acquisition(lambda X: cgp_ucb(cp, X, beta), model.dim, budget, rng_seed)
    source = Source.CGP if cp.retained_count else Source.GP
    diag = {"kappa": k, "samples": S, "retained_count": cp.retained_count, "af_max": res.value, "beta": beta}
    return MechanismDecision(res.argmax, source, diag)


__all__ = [
    "MechanismDecision",
    "Schedules",
    "Source",
    "constrained_step",
    "default_p",
    "default_samples",
    "derive_seed",
    "justify_step",
    "transient_step",
    "ucb_step",
]
