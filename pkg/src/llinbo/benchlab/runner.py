"""The optimization loop, replications, trace files and aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from ..acquisition import BetaSchedule
from ..agents import AgentConfig, AgentError, ProblemContext, make_agent
from ..gp import DEFAULT_NOISE, Dataset, GPFitError, fit_gp, with_data
from ..mechanisms import (
    Schedules,
    Source,
    constrained_step,
    default_samples,
    derive_seed,
    justify_step,
    transient_step,
    ucb_step,
)
from .functions import get_benchmark
from .policies import llambo_light_step, llambo_step

log = logging.getLogger(__name__)

POLICIES = ("BO", "LLAMBO", "LLAMBOLight", "Transient", "Justify", "Constrained")
AGENT_POLICIES = frozenset(POLICIES) - {"BO"}
GP_POLICIES = frozenset({"BO", "Transient", "Justify", "Constrained"})

# purpose codes for derive_seed(root, replication, iteration, purpose)
_AGENT, _WARMSTART, _LLAMBO = 4, 5, 6


@dataclass
class ScheduleConfig:
    """JSON-friendly schedule settings; ``None`` means the default formula."""

    p: float | None = None
    psi: float | None = None
    samples: int | None = None
    beta_mode: str = "practical"
    beta_delta: float = 0.1
    beta_value: float = 1.0

    def build(self, horizon: int, dim: int) -> Schedules:
        beta = BetaSchedule(dim, self.beta_mode, self.beta_delta, self.beta_value, horizon=horizon)
        p = None if self.p is None else (lambda t, v=float(self.p): v)
        psi = None if self.psi is None else (lambda t, v=float(self.psi): v)
        samples = default_samples if self.samples is None else (lambda t, v=int(self.samples): v)
        return Schedules(horizon, beta, p=p, psi=psi, samples=samples)


@dataclass
class RunConfig:
    function: str = "Branin2"
    policy: str = "BO"
    agent: AgentConfig = field(default_factory=AgentConfig)
    schedules: ScheduleConfig = field(default_factory=ScheduleConfig)
    T: int | None = None
    replications: int = 10
    root_seed: int = 0
    budget: int | None = None
    noise: float = DEFAULT_NOISE
    out: str | None = None
    warmstart: str = "auto"
    refit_every: int = 1
    workers: int = 1
    llambo_alpha: float = 0.1
    llambo_candidates: int = 10

    def __post_init__(self):
        if isinstance(self.agent, dict):
            self.agent = AgentConfig(**self.agent)
        if isinstance(self.schedules, dict):
            self.schedules = ScheduleConfig(**self.schedules)
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if self.warmstart not in ("auto", "agent", "random"):
            raise ValueError("warmstart must be 'auto', 'agent' or 'random'")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.refit_every < 1:
            raise ValueError("refit_every must be at least 1")
        get_benchmark(self.function)

    @property
    def horizon(self) -> int:
        return self.T if self.T is not None else 10 * get_benchmark(self.function).dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RegretTrace:
    header: dict
    records: list[dict] = field(default_factory=list)

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r["regret"] for r in self.records])

    @property
    def instant_regrets(self) -> np.ndarray:
        known = self.header["known_max"]
        return np.array([known - r["y"] for r in self.records])

    @property
    def chosen(self) -> np.ndarray:
        return np.array([r["x"] for r in self.records])

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([r["y"] for r in self.records])

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        lines += [json.dumps({"type": "iteration", **r}, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "RegretTrace":
        header, records = None, []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type", "iteration")
            if kind == "header":
                header = rec
            else:
                records.append(rec)
        if header is None:
            raise ValueError(f"{path} has no header line")
        return cls(header, records)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def run_once(cfg: RunConfig, replication_index: int = 0) -> RegretTrace:
    """Warmstart, then ``T`` iterations of the configured policy."""
    bench = get_benchmark(cfg.function)
    D, T = bench.dim, cfg.horizon
    root, rep = cfg.root_seed, replication_index
    ctx = ProblemContext(bench.description_card, D, optimum=bench.argmax, name=bench.name)
    sched = cfg.schedules.build(T, D)
    uses_agent = cfg.policy in AGENT_POLICIES
    agent = make_agent(cfg.agent, derive_seed(root, rep, 0, _AGENT)) if uses_agent else None

    mode = cfg.warmstart
    if mode == "auto":
        mode = "agent" if uses_agent else "random"
    if mode == "agent":
        if agent is None:
            raise ValueError("agent warmstart requested for a policy without an agent")
        X0 = np.array(agent.warmstart(ctx, D))
    else:
        X0 = np.random.default_rng(derive_seed(root, rep, 0, _WARMSTART)).random((D, D))
    data = Dataset(X0, bench.batch(X0))

    header = {
        "config": cfg.to_dict(),
        "replication": rep,
        "function": bench.name,
        "dim": D,
        "T": T,
        "known_max": bench.known_max,
        "warmstart": {"mode": mode, "X": data.X.tolist(), "y": data.y.tolist()},
    }
    trace = RegretTrace(_jsonable(header))
    best = float(data.y.max())
    model = None

    for t in range(1, T + 1):
        seed = derive_seed(root, rep, t)
        if cfg.policy in GP_POLICIES:
            if model is None or (t - 1) % cfg.refit_every == 0:
                model = fit_gp(data, cfg.noise)
            else:
                model = with_data(model, data)
        suggestion = None
        if uses_agent and cfg.policy != "LLAMBO":
            suggestion = agent.suggest(ctx, data, t)

        if cfg.policy == "BO":
            dec = ucb_step(model, t, sched, seed, cfg.budget)
        elif cfg.policy == "Transient":
            dec = transient_step(model, suggestion.design, t, sched, seed, cfg.budget)
        elif cfg.policy == "Justify":
            if cfg.schedules.psi is None and t == 1:
                sched.capture_sigma0(model, suggestion.design)
            dec = justify_step(model, suggestion.design, t, sched, seed, cfg.budget)
        elif cfg.policy == "Constrained":
            dec = constrained_step(model, suggestion.design, t, sched, seed, cfg.budget)
        elif cfg.policy == "LLAMBOLight":
            dec = llambo_light_step(_Replay(suggestion), ctx, data, t)
        else:
            dec = llambo_step(
                agent, ctx, data, cfg.llambo_alpha, cfg.llambo_candidates, derive_seed(root, rep, t, _LLAMBO)
            )

        x = np.clip(dec.chosen, 0.0, 1.0)
        y = bench(x)
        data = data.append(x, y)
        best = max(best, y)
        rec = {
            "t": t,
            "x": x.tolist(),
            "y": y,
            "best_y": best,
            "regret": bench.known_max - best,
            "source": dec.source.value,
            "diagnostics": _jsonable({k: v for k, v in dec.diagnostics.items() if k != "agent"}),
            "agent": suggestion.to_dict() if suggestion is not None else dec.diagnostics.get("agent"),
            "model": model.summary() if model is not None else None,
        }
        trace.records.append(_jsonable(rec))
    return trace


class _Replay:
    """Hands an already-obtained suggestion to a step expecting an agent."""

    def __init__(self, suggestion):
        self.suggestion = suggestion

    def suggest(self, ctx, history, t):
        return self.suggestion


def _run_replication(args) -> tuple[int, RegretTrace | None, dict | None]:
    cfg, rep = args
    try:
        return rep, run_once(cfg, rep), None
    except (GPFitError, AgentError) as exc:
        log.error("replication %d aborted: %s", rep, exc)
        return rep, None, {"replication": rep, "error_type": type(exc).__name__, "message": str(exc)}


def aggregate(traces: list[RegretTrace]) -> list[dict]:
    """Mean best-observed regret per iteration with a 95% t-interval."""
    if not traces:
        return []
    G = np.array([tr.regrets for tr in traces])
    n = G.shape[0]
    mean = G.mean(0)
    if n > 1:
        half = stats.t.ppf(0.975, n - 1) * G.std(0, ddof=1) / math.sqrt(n)
    else:
        half = np.zeros_like(mean)
    return [
        {"t": t + 1, "mean_G": float(mean[t]), "ci_low": float(mean[t] - half[t]), "ci_high": float(mean[t] + half[t])}
        for t in range(G.shape[1])
    ]


def aggregate_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mean_G", "ci_low", "ci_high"])
    for r in rows:
        w.writerow([r["t"], repr(r["mean_G"]), repr(r["ci_low"]), repr(r["ci_high"])])
    return buf.getvalue()


def trace_filename(rep: int) -> str:
    return f"trace_rep{rep:03d}.jsonl"


def run_experiment(cfg: RunConfig) -> dict:
    """Run every replication, then write traces, ``aggregate.csv`` and ``summary.json``.

    Nothing is written when ``cfg.out`` is ``None``.
    """
    jobs = [(cfg, rep) for rep in range(cfg.replications)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_replication, jobs))
    else:
        results = [_run_replication(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    traces = [tr for _, tr, _ in results if tr is not None]
    failures = [err for _, _, err in results if err is not None]
    rows = aggregate(traces)
    summary = {
        "function": cfg.function,
        "policy": cfg.policy,
        "T": cfg.horizon,
        "replications_requested": cfg.replications,
        "replications_completed": len(traces),
        "complete": not failures,
        "failures": failures,
        "final_mean_G": rows[-1]["mean_G"] if rows else None,
    }
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for rep, tr, _ in results:
            if tr is not None:
                tr.write(out / trace_filename(rep))
        (out / "aggregate.csv").write_text(aggregate_csv(rows))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["traces"] = traces
    summary["aggregate"] = rows
    return summary


def aggregate_dir(trace_dir: str | Path) -> list[dict]:
    paths = sorted(Path(trace_dir).glob("trace_rep*.jsonl"))
    return aggregate([RegretTrace.read(p) for p in paths])


__all__ = [
    "POLICIES",
    "RegretTrace",
    "RunConfig",
    "ScheduleConfig",
    "aggregate",
    "aggregate_csv",
    "aggregate_dir",
    "run_experiment",
    "run_once",
]
