"""Agent-only baselines: LLAMBO-light and a prompt-surrogate LLAMBO."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from ..agents import ProblemContext, SuggestionAgent
from ..gp import Dataset
from ..mechanisms import MechanismDecision, Source

SURROGATE_REPEATS = 5


def target_score(y, alpha: float = 0.1, sense: str = "Maximize") -> float:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("target score needs at least one observation")
    lo, hi = float(y.min()), float(y.max())
    if sense == "Maximize":
        return hi - alpha * (hi - lo)
    return lo + alpha * (hi - lo)


def expected_improvement(mean: float, sd: float, incumbent: float) -> float:
    """EI for maximization; with ``sd == 0`` it is ``max(mean - incumbent, 0)``."""
    if sd <= 0:
        return max(mean - incumbent, 0.0)
    z = (mean - incumbent) / sd
    return (mean - incumbent) * float(norm.cdf(z)) + sd * float(norm.pdf(z))


def llambo_light_step(agent: SuggestionAgent, ctx: ProblemContext, history: Dataset, t: int | None = None) -> MechanismDecision:
    """Query the agent's suggestion directly, no surrogate involved."""
    sug = agent.suggest(ctx, history, len(history) if t is None else t)
    return MechanismDecision(sug.design, Source.LLM, {"agent": sug.to_dict()})


def llambo_step(
    agent: SuggestionAgent,
    ctx: ProblemContext,
    history: Dataset,
    alpha: float = 0.1,
    n_candidates: int = 10,
    rng_seed: int = 0,
    surrogate_repeats: int = SURROGATE_REPEATS,
) -> MechanismDecision:
    """Sample candidates aimed at the target score, score them by prompted EI.

    Each candidate and each surrogate query sees the history in a fresh random
    order. A candidate's predictive mean and standard deviation are the sample
    moments of its ``surrogate_repeats`` prompted values.
    """
    if len(history) == 0:
        raise ValueError("LLAMBO needs a non-empty history")
    rng = np.random.default_rng(rng_seed)
    n = len(history)
    target = target_score(history.y, alpha, ctx.objective_sense)
    incumbent = float(history.y.max())

    candidates = []
    for _ in range(n_candidates):
        sug = agent.sample_candidate(ctx, history, target, rng.permutation(n).tolist())
        if not sug.fallback:
            candidates.append(sug.design)
    diag: dict = {"target_score": target, "n_parsed": len(candidates)}
    if not candidates:
        diag["fallback"] = True
        return MechanismDecision(rng.random(ctx.dim), Source.LLM, diag)
    if len(candidates) == 1:
        return MechanismDecision(candidates[0], Source.LLM, diag)

    scores = []
    for x in candidates:
        preds = [agent.predict_value(ctx, history, x, rng.permutation(n).tolist()) for _ in range(surrogate_repeats)]
        preds = [p for p in preds if p is not None]
        if not preds:
            scores.append(-math.inf)
            continue
        mean = float(np.mean(preds))
        sd = float(np.std(preds, ddof=1)) if len(preds) > 1 else 0.0
        scores.append(expected_improvement(mean, sd, incumbent))
    best = int(np.argmax(scores))
    diag["ei"] = [s if math.isfinite(s) else None for s in scores]
    return MechanismDecision(candidates[best], Source.LLM, diag)
