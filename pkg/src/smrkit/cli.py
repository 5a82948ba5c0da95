"""Command line entry points.

  smrkit run    --config scen.conf --seed 7 --out results/
  smrkit verify --trace results/trace.bin
  smrkit sweep  --config scen.conf --param leaderCount=1..8 --seeds 3 --out sweeps/

``run`` executes one scenario, writes the trace, windowed metrics CSV, and a
summary, and exits nonzero if any invariant failed.  ``verify`` replays the
invariant checks over a recorded trace.  ``sweep`` grid-runs a parameter
range and aggregates per-run metrics into one CSV.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import checks, metrics
from .config import ConfigError, load_scenario, parse_scenario
from .sim.runner import run_scenario
from .trace import read_trace, write_trace


def _print_verdicts(verdicts, out=sys.stdout) -> bool:
    ok = True
    for name in sorted(verdicts):
        v = verdicts[name]
        line = f"{name:18s} {v.status}"
        if v.detail:
            line += f"  ({v.detail})"
        print(line, file=out)
        if v.status == checks.FAIL:
            ok = False
    return ok


def cmd_run(args) -> int:
    try:
        scen = load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(scen, args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trace.bin"), "wb") as fh:
        write_trace(fh, result.events)
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(metrics.windows_csv(result.metrics))
    final_epoch = max(result.metrics.epoch_entry, default=0)
    lines = [
        f"seed: {args.seed}",
        f"final_epoch: {final_epoch}",
        f"submitted: {result.metrics.submitted}",
        f"delivered: {result.metrics.completed}",
        f"mean_latency_ms: {result.metrics.mean_latency_ns / 1e6:.3f}",
        "verdicts:",
    ]
    for name in sorted(result.verdicts):
        v = result.verdicts[name]
        lines.append(f"  {name}: {v.status}" + (f" ({v.detail})" if v.detail else ""))
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(summary)
    print(summary, end="")
    return 0 if result.clean else 1


def cmd_verify(args) -> int:
    with open(args.trace, "rb") as fh:
        events = read_trace(fh)
    verdicts = checks.evaluate(events)
    return 0 if _print_verdicts(verdicts) else 1


def _parse_range(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise ConfigError("--param expects key=range")
    key, raw = spec.split("=", 1)
    raw = raw.strip()
    values: list[str] = []
    if ".." in raw:
        lo, hi = raw.split("..", 1)
        values = [str(v) for v in range(int(lo), int(hi) + 1)]
    else:
        values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"--param {key}: empty range")
    return key.strip(), values


def cmd_sweep(args) -> int:
    try:
        with open(args.config) as fh:
            base_text = fh.read()
        key, values = _parse_range(args.param) if args.param else (None, [None])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    rows = ["param,value,seed,submitted,delivered,peak_sustained_rps,"
            "mean_latency_ms,p95_latency_ms,failed_checks"]
    worst = 0
    for value in values:
        text = base_text
        if key is not None:
            text += f"\n{key} = {value}\n"
        try:
            scen = parse_scenario(text)
        except ConfigError as exc:
            print(f"config error at {key}={value}: {exc}", file=sys.stderr)
            return 2
        for seed in range(args.seeds):
            result = run_scenario(scen, seed)
            failed = sum(1 for v in result.verdicts.values() if v.status == checks.FAIL)
            worst = max(worst, failed)
            m = result.metrics
            rows.append(
                f"{key or ''},{value if value is not None else ''},{seed},"
                f"{m.submitted},{m.completed},{metrics.peak_sustained(m):.1f},"
                f"{m.mean_latency_ns / 1e6:.3f},{m.p95_latency_ns / 1e6:.3f},{failed}"
            )
            print(rows[-1])
    with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
        fh.write("\n".join(rows) + "\n")
    return 0 if worst == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="smrkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify", help="re-check a recorded trace")
    p_verify.add_argument("--trace", required=True)
    p_verify.set_defaults(fn=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="grid-run a parameter range")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", default=None, help="key=lo..hi or key=a,b,c")
    p_sweep.add_argument("--seeds", type=int, default=1)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(fn=cmd_sweep)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
