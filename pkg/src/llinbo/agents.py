"""Suggestion agents: offline mocks and a chat-completion client.

All agents return designs inside [0, 1]^D. The chat client never raises out of
``warmstart``/``suggest``: after ``max_retries`` failed attempts it falls back
to a uniform-random design and flags the suggestion.
"""

from __future__ import annotations

import json
import logging
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .gp import Dataset

log = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are an AI assistant that helps people find the maximum of a black-box function."
DEFAULT_API_KEY_ENV = "LLINBO_API_KEY"

WARMSTART_TEMPLATE = (
    "You are assisting me with maximizing a black-box function. The function is {patterns}. "
    "Suggest {count} promising starting points in the range [0, 1]^{dim}. "
    "Return the points strictly in JSON format as a list of {dim}-dimensional vectors. "
    "Do not include any explanations, labels, formatting, or extra text. The response must be strictly valid JSON."
)
CANDIDATE_SAMPLING_TEMPLATE = (
    "The following are past evaluations of a black-box function. The function is {patterns}. {data_card} "
    "The allowable ranges for x is [0, 1]^{dim}. Recommend a new x that can achieve the function value of {target}. "
    "Return only a single {dim}-dimensional numerical vector with the highest possible precision. "
    "Do not include any explanations, labels, formatting, or extra text. The response must be strictly valid JSON."
)
SURROGATE_TEMPLATE = (
    "The following are past evaluations of a black-box function, which is {patterns}. {data_card} "
    "The allowable ranges for x is [0, 1]^{dim}. Predict the function value at x = {x}. "
    "Return only a single numerical value. Do not include any explanations, labels, formatting, or extra text. "
    "The response must be strictly a valid floating-point number."
)
CANDIDATE_GENERATION_TEMPLATE = (
    "The following are past evaluations of a black-box function, which is {patterns}. {data_card} "
    "The allowable ranges for x is [0, 1]^{dim}. Based on the past data, recommend the next point to evaluate "
    "that balances exploration and exploitation: - Exploration means selecting a point in an unexplored or "
    "less-sampled region that is far from the previously evaluated points. - Exploitation means selecting a point "
    "close to the previously high-performing evaluations. The goal is to eventually find the global maximum. "
    "Return only a single {dim}-dimensional numerical vector with high precision. The response must be valid JSON "
    "with no explanations, labels, or extra formatting. Do not include any explanations, labels, formatting, or "
    "extra text."
)


class AgentError(RuntimeError):
    pass


class ReplayExhausted(AgentError):
    pass


@dataclass(frozen=True)
class ProblemContext:
    """What an agent is told about the problem.

    ``optimum`` is only consulted by the oracle-style mock agents.
    """

    description: str
    dim: int
    objective_sense: str = "Maximize"
    optimum: tuple[float, ...] | None = None
    name: str = ""


@dataclass
class AgentSuggestion:
    design: np.ndarray
    raw_payload: str = ""
    attempts: int = 1
    fallback: bool = False
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "design": self.design.tolist(),
            "raw_payload": self.raw_payload,
            "attempts": self.attempts,
            "fallback": self.fallback,
            "clamped": self.clamped,
        }


def format_coord(c: float) -> str:
    s = f"{c:.4f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def format_outcome(y: float) -> str:
    return f"{y:.4g}"


def render_data_card(history: Dataset, order: Sequence[int] | None = None) -> str:
    """``x: (0.2334, 0.12), f(x): 1.231; ...`` in insertion order unless ``order`` is given."""
    idx = range(len(history)) if order is None else order
    parts = []
    for i in idx:
        coords = ", ".join(format_coord(c) for c in history.X[i])
        parts.append(f"x: ({coords}), f(x): {format_outcome(history.y[i])}")
    return "; ".join(parts)


def render_warmstart_prompt(ctx: ProblemContext, count: int) -> str:
    return WARMSTART_TEMPLATE.format(patterns=ctx.description, count=count, dim=ctx.dim)


def render_candidate_generation_prompt(ctx: ProblemContext, history: Dataset) -> str:
    return CANDIDATE_GENERATION_TEMPLATE.format(
        patterns=ctx.description, data_card=render_data_card(history), dim=ctx.dim
    )


def render_candidate_sampling_prompt(
    ctx: ProblemContext, history: Dataset, target: float, order: Sequence[int] | None = None
) -> str:
    return CANDIDATE_SAMPLING_TEMPLATE.format(
        patterns=ctx.description,
        data_card=render_data_card(history, order),
        dim=ctx.dim,
        target=format_outcome(target),
    )


def render_surrogate_prompt(ctx: ProblemContext, history: Dataset, x, order: Sequence[int] | None = None) -> str:
    coords = "(" + ", ".join(format_coord(c) for c in np.asarray(x, dtype=float)) + ")"
    return SURROGATE_TEMPLATE.format(
        patterns=ctx.description, data_card=render_data_card(history, order), dim=ctx.dim, x=coords
    )


# --- reply parsing -----------------------------------------------------------

_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.IGNORECASE)
_BRACKETS = re.compile(r"\[.*\]", re.DOTALL)


def _load_json(text: str) -> Any:
    text = _FENCE.sub("", text.strip())
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        m = _BRACKETS.search(text)
        if m is None:
            raise ValueError(f"reply is not JSON: {text[:80]!r}") from None
        try:
            return json.loads(m.group(0))
        except json.JSONDecodeError:
            raise ValueError(f"reply is not JSON: {text[:80]!r}") from None


def _as_vector(obj: Any, dim: int) -> np.ndarray:
    if isinstance(obj, dict) and "x" in obj:
        obj = obj["x"]
    if not isinstance(obj, list) or len(obj) != dim or any(isinstance(v, (bool, list, dict)) for v in obj):
        raise ValueError(f"expected a list of {dim} numbers, got {obj!r}")
    arr = np.array(obj, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite coordinates in {obj!r}")
    return arr


def parse_vector(text: str, dim: int) -> np.ndarray:
    obj = _load_json(text)
    # a single vector wrapped in an outer list is accepted
    if isinstance(obj, list) and len(obj) == 1 and isinstance(obj[0], list):
        obj = obj[0]
    return _as_vector(obj, dim)


def parse_vectors(text: str, dim: int) -> list[np.ndarray]:
    obj = _load_json(text)
    if not isinstance(obj, list) or not obj:
        raise ValueError("expected a non-empty list of vectors")
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
        obj = [obj]
    return [_as_vector(v, dim) for v in obj]


def parse_number(text: str) -> float:
    text = _FENCE.sub("", text.strip())
    try:
        val = float(json.loads(text))
    except (json.JSONDecodeError, TypeError, ValueError):
        m = re.search(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", text)
        if m is None:
            raise ValueError(f"reply is not a number: {text[:80]!r}") from None
        val = float(m.group(0))
    if not np.isfinite(val):
        raise ValueError("reply is not finite")
    return val


def clamp(design: np.ndarray) -> tuple[np.ndarray, bool]:
    clipped = np.clip(design, 0.0, 1.0)
    return clipped, bool(np.any(clipped != design))


# --- agents -------------------------------------------------------------------


class SuggestionAgent:
    """Base agent. Subclasses override :meth:`_propose`; the rest has defaults.

    ``sample_candidate`` and ``predict_value`` back the LLAMBO baseline; mocks
    implement them without any model behind them.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def _uniform(self, dim: int) -> np.ndarray:
        return self.rng.random(dim)

    def _propose(self, ctx: ProblemContext, history: Dataset) -> np.ndarray:
        raise NotImplementedError

    def warmstart(self, ctx: ProblemContext, count: int) -> list[np.ndarray]:
        if count < 1:
            raise ValueError("count must be at least 1")
        empty = Dataset.empty(ctx.dim)
        return [clamp(self._propose(ctx, empty))[0] for _ in range(count)]

    def suggest(self, ctx: ProblemContext, history: Dataset, t: int) -> AgentSuggestion:
        design, clamped = clamp(np.asarray(self._propose(ctx, history), dtype=float))
        return AgentSuggestion(design, raw_payload=json.dumps(design.tolist()), clamped=clamped)

    def sample_candidate(
        self, ctx: ProblemContext, history: Dataset, target: float, order: Sequence[int] | None = None
    ) -> AgentSuggestion:
        return self.suggest(ctx, history, len(history))

    def predict_value(
        self, ctx: ProblemContext, history: Dataset, x, order: Sequence[int] | None = None
    ) -> float | None:
        # inverse-distance weighting of the history, jittered by the agent's rng
        if len(history) == 0:
            return float(self.rng.normal())
        d = np.linalg.norm(history.X - np.asarray(x, dtype=float), axis=1)
        if np.any(d == 0):
            base = float(history.y[np.argmin(d)])
        else:
            w = 1.0 / d**2
            base = float(w @ history.y / w.sum())
        spread = float(np.std(history.y)) if len(history) > 1 else 1.0
        return base + 0.1 * spread * float(self.rng.normal())


class UniformRandomAgent(SuggestionAgent):
    def _propose(self, ctx, history):
        return self._uniform(ctx.dim)


class OracleNoiseAgent(SuggestionAgent):
    """Returns the true optimum perturbed by ``N(0, sigma^2)`` per coordinate."""

    def __init__(self, sigma: float, seed: int = 0):
        super().__init__(seed)
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.sigma = sigma

    def _propose(self, ctx, history):
        if ctx.optimum is None:
            raise AgentError("OracleNoise agent needs ProblemContext.optimum")
        opt = np.asarray(ctx.optimum, dtype=float)
        if self.sigma == 0:
            return opt.copy()
        return opt + self.sigma * self.rng.standard_normal(ctx.dim)


class AdversarialAgent(SuggestionAgent):
    """Picks the farthest of 128 random candidates from the true optimum."""

    n_candidates = 128

    def _propose(self, ctx, history):
        if ctx.optimum is None:
            raise AgentError("Adversarial agent needs ProblemContext.optimum")
        C = self.rng.random((self.n_candidates, ctx.dim))
        d = np.linalg.norm(C - np.asarray(ctx.optimum, dtype=float), axis=1)
        return C[int(np.argmax(d))]


class ReplayAgent(SuggestionAgent):
    """Replays designs from a JSON-lines file, one array per line, in order."""

    def __init__(self, path: str | Path, seed: int = 0):
        super().__init__(seed)
        self.path = Path(path)
        lines = [ln for ln in self.path.read_text().splitlines() if ln.strip()]
        self._queue = [json.loads(ln) for ln in lines]
        self._pos = 0

    def _propose(self, ctx, history):
        if self._pos >= len(self._queue):
            raise ReplayExhausted(f"replay file {self.path} exhausted after {self._pos} designs")
        vec = _as_vector(self._queue[self._pos], ctx.dim)
        self._pos += 1
        return vec


Transport = Callable[[str, dict, dict, float], dict]


def urllib_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json", **headers}
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode())


class ChatCompletionAgent(SuggestionAgent):
    """Agent backed by an OpenAI-style ``/chat/completions`` endpoint.

    Parameters
    ----------
    endpoint : str
        Full URL the JSON request is POSTed to.
    model_name : str
        Value of the ``model`` field.
    temperature : float
        Sampling temperature; 1.0 is the service default.
    timeout : float
        Per-request timeout in seconds.
    max_retries : int
        Extra attempts after the first one before falling back.
    api_key_env : str
        Environment variable holding the bearer token. The key is never logged.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str = "gpt-3.5-turbo",
        temperature: float = 1.0,
        timeout: float = 30.0,
        max_retries: int = 2,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        seed: int = 0,
        transport: Transport | None = None,
        system_prompt: str = SYSTEM_PROMPT,
    ):
        super().__init__(seed)
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.api_key_env = api_key_env
        self.transport = transport or urllib_transport
        self.system_prompt = system_prompt
        self.fallbacks = 0
        self.requests = 0

    def chat(self, prompt: str) -> str:
        payload = {
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": prompt},
            ],
        }
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self.requests += 1
        try:
            reply = self.transport(self.endpoint, payload, headers, self.timeout)
            return reply["choices"][0]["message"]["content"]
        except (urllib.error.URLError, OSError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise AgentError(f"chat request failed: {exc.__class__.__name__}: {exc}") from exc

    def _ask(self, prompt: str, parse: Callable[[str], Any]) -> tuple[Any, int, str]:
        """Send ``prompt`` until ``parse`` accepts a reply; ``(None, attempts, log)`` on failure."""
        errors = []
        for attempt in range(1, self.max_retries + 2):
            try:
                text = self.chat(prompt)
            except AgentError as exc:
                errors.append(str(exc))
                continue
            try:
                return parse(text), attempt, text
            except ValueError as exc:
                errors.append(f"{exc} (reply {text[:80]!r})")
        return None, self.max_retries + 1, " | ".join(errors)

    def _fallback(self, dim: int, attempts: int, why: str) -> AgentSuggestion:
        self.fallbacks += 1
        log.warning("agent reply unusable after %d attempts, using a random design: %s", attempts, why)
        return AgentSuggestion(self._uniform(dim), raw_payload=why, attempts=attempts, fallback=True)

    def _vector_request(self, prompt: str, dim: int) -> AgentSuggestion:
        vec, attempts, raw = self._ask(prompt, lambda s: parse_vector(s, dim))
        if vec is None:
            return self._fallback(dim, attempts, raw)
        design, clamped = clamp(vec)
        if clamped:
            raw = f"{raw} [clamped to {json.dumps(design.tolist())}]"
        return AgentSuggestion(design, raw_payload=raw, attempts=attempts, clamped=clamped)

    def warmstart(self, ctx: ProblemContext, count: int) -> list[np.ndarray]:
        if count < 1:
            raise ValueError("count must be at least 1")
        vecs, attempts, raw = self._ask(render_warmstart_prompt(ctx, count), lambda s: parse_vectors(s, ctx.dim))
        if vecs is None:
            self.fallbacks += 1
            log.warning("warmstart reply unusable after %d attempts, using random designs: %s", attempts, raw)
            vecs = []
        designs = [clamp(v)[0] for v in vecs[:count]]
        if len(designs) < count and vecs:
            log.warning("warmstart returned %d of %d designs; padding with random designs", len(designs), count)
        while len(designs) < count:
            designs.append(self._uniform(ctx.dim))
        return designs

    def suggest(self, ctx: ProblemContext, history: Dataset, t: int) -> AgentSuggestion:
        return self._vector_request(render_candidate_generation_prompt(ctx, history), ctx.dim)

    def sample_candidate(self, ctx, history, target, order=None) -> AgentSuggestion:
        return self._vector_request(render_candidate_sampling_prompt(ctx, history, target, order), ctx.dim)

    def predict_value(self, ctx, history, x, order=None) -> float | None:
        val, _, _ = self._ask(render_surrogate_prompt(ctx, history, x, order), parse_number)
        return val


@dataclass
class AgentConfig:
    """Serializable agent description.

    ``kind`` is one of ``OracleNoise``, ``UniformRandom``, ``Adversarial``,
    ``Replay`` or ``ChatCompletion``.
    """

    kind: str = "UniformRandom"
    seed: int = 0
    sigma: float = 0.1
    path: str | None = None
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo"
    temperature: float = 1.0
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env: str = DEFAULT_API_KEY_ENV
    extra: dict = field(default_factory=dict)

    KINDS = ("OracleNoise", "UniformRandom", "Adversarial", "Replay", "ChatCompletion")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; choose from {', '.join(self.KINDS)}")
        if self.kind == "Replay" and not self.path:
            raise ValueError("Replay agent needs a path")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return d


def make_agent(cfg: AgentConfig, seed: int | None = None) -> SuggestionAgent:
    seed = cfg.seed if seed is None else seed
    if cfg.kind == "UniformRandom":
        return UniformRandomAgent(seed)
    if cfg.kind == "OracleNoise":
        return OracleNoiseAgent(cfg.sigma, seed)
    if cfg.kind == "Adversarial":
        return AdversarialAgent(seed)
    if cfg.kind == "Replay":
        return ReplayAgent(cfg.path, seed)
    return ChatCompletionAgent(
        cfg.endpoint,
        cfg.model_name,
        cfg.temperature,
        cfg.timeout,
        cfg.max_retries,
        cfg.api_key_env,
        seed=seed,
    )


def warmstart(agent: SuggestionAgent, ctx: ProblemContext, count: int) -> list[np.ndarray]:
    return agent.warmstart(ctx, count)


def suggest(agent: SuggestionAgent, ctx: ProblemContext, history: Dataset, t: int) -> AgentSuggestion:
    return agent.suggest(ctx, history, t)
