"""Command-line entry point: ``llinbo run | aggregate | oracle | stub-server``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .benchlab import oracle as oracle_mod
from .benchlab.constants import KNOWN_MAX
from .benchlab.functions import NAMES
from .benchlab.runner import POLICIES, RunConfig, aggregate_csv, aggregate_dir, run_experiment
from .benchlab.stub_server import MODES, StubChatServer


def _run(args) -> int:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    overrides = {
        "policy": args.policy,
        "function": args.function,
        "root_seed": args.seed,
        "replications": args.reps,
        "out": args.out,
        "T": args.T,
        "workers": args.workers,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.agent is not None:
        base.setdefault("agent", {})
        base["agent"] = {**base["agent"], "kind": args.agent}
    if args.endpoint is not None:
        base.setdefault("agent", {})
        base["agent"] = {**base["agent"], "endpoint": args.endpoint}
    cfg = RunConfig.from_dict(base)
    summary = run_experiment(cfg)
    printable = {k: v for k, v in summary.items() if k not in ("traces", "aggregate")}
    print(json.dumps(printable, indent=2, sort_keys=True))
    return 0 if summary["complete"] else 1


def _aggregate(args) -> int:
    text = aggregate_csv(aggregate_dir(args.trace_dir))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _oracle(args) -> int:
    names = args.functions or list(NAMES)
    results = oracle_mod.compute_all(names)
    status = 0
    for name, rec in results.items():
        pinned = KNOWN_MAX.get(name, {}).get("value")
        diff = None if pinned is None else abs(pinned - rec["value"])
        ok = diff is not None and diff <= args.tol
        status |= 0 if ok else 1
        print(f"{name:12s} recomputed={rec['value']:.10g} pinned={pinned!r} {'ok' if ok else 'MISMATCH'}")
    if args.write:
        if set(names) != set(NAMES):
            print("--write needs every function", file=sys.stderr)
            return 2
        path = Path(oracle_mod.__file__).with_name("constants.py")
        path.write_text(oracle_mod.render_constants(results))
        print(f"wrote {path}")
        return 0
    return status


def _stub(args) -> int:
    script = None
    if args.script:
        script = [ln for ln in Path(args.script).read_text().splitlines() if ln.strip()]
    server = StubChatServer(args.mode, script, host=args.host, port=args.port, seed=args.seed)
    print(f"stub chat-completion server ({args.mode}) at {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llinbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run replications of one policy on one benchmark")
    p.add_argument("--config", help="JSON run configuration; flags below override it")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--function", choices=NAMES)
    p.add_argument("--agent", choices=("OracleNoise", "UniformRandom", "Adversarial", "Replay", "ChatCompletion"))
    p.add_argument("--endpoint", help="chat-completion URL for the ChatCompletion agent")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--T", type=int, help="iterations after warmstart (default 10*D)")
    p.add_argument("--workers", type=int, help="parallel replications")
    p.add_argument("--out", help="output directory for traces, aggregate.csv and summary.json")
    p.set_defaults(func=_run)

    p = sub.add_parser("aggregate", help="aggregate a directory of trace files into CSV")
    p.add_argument("trace_dir")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_aggregate)

    p = sub.add_parser("oracle", help="recompute benchmark maxima and compare with the pinned constants")
    p.add_argument("functions", nargs="*", metavar="FUNCTION")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--write", action="store_true", help="rewrite the pinned constants file")
    p.set_defaults(func=_oracle)

    p = sub.add_parser("stub-server", help="serve a local chat-completion stub")
    p.add_argument("--mode", choices=MODES, default="valid")
    p.add_argument("--script", help="file of reply strings, one per line (mode=script)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_stub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "oracle":
        unknown = set(args.functions) - set(NAMES)
        if unknown:
            print(f"unknown functions: {sorted(unknown)}", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
