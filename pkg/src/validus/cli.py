"""Command line: classify, run, bench, check.

Exit codes: 0 success, 1 malformed input or refused configuration,
2 enumeration budget exceeded, 3 a run or check produced a failing verdict.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import validity as V
from .bench import BenchAbort, doubling_ratios, flag_ratios, summary, sweep
from .crypto import MODES
from .errors import BudgetExceeded, LambdaUndefined, SchemaError, UnknownAdversary
from .protocols import PROTOCOLS
from .scenario import ScenarioSpec, check_trace_text, metrics_csv, run_spec
from .sim import jsonable


def _property(args) -> V.ValidityProperty:
    if args.property_file:
        return V.load_property(args.property_file)
    return V.builtin(args.builtin or "strong")


def _space(args) -> V.ValueSpace:
    inputs = V.parse_values(args.values)
    outputs = V.parse_values(args.outputs) if getattr(args, "outputs", None) else inputs
    return V.ValueSpace(inputs, outputs)


def cmd_classify(args) -> int:
    params = V.SystemParams(args.n, args.t)
    space = _space(args)
    rep = V.classify(_property(args), params, space)
    print(rep.render())
    if rep.lambda_table is not None:
        if args.out:
            Path(args.out).write_text(rep.lambda_table.to_csv())
            print(f"lambda table written to {args.out}")
        elif not args.quiet:
            sys.stdout.write(rep.lambda_table.to_csv())
    return 0


def _spec_from_flags(args) -> ScenarioSpec:
    params = V.SystemParams(args.n, args.t)
    space = _space(args)
    faulty = set()
    if args.adversary:
        if args.adversary == "lower_bound":
            k = -(-args.t // 2)
        else:
            k = args.t
        faulty = set(range(args.n - k + 1, args.n + 1))
    rng = random.Random(args.seed)
    proposals = [[p, rng.choice(space.inputs)] for p in params.processes if p not in faulty]
    prop = _property(args)
    return ScenarioSpec(n=args.n, t=args.t, protocol=args.protocol, proposals=proposals,
                        values=list(space.inputs),
                        outputs=list(space.outputs) if space.outputs != space.inputs else None,
                        property=V.property_to_json(prop), adversary=args.adversary,
                        gst=args.gst, delta=args.delta, seed=args.seed, schedule=args.schedule,
                        max_ticks=args.max_ticks, crypto_mode=args.crypto_mode)


def cmd_run(args) -> int:
    if args.scenario:
        spec = ScenarioSpec.load(args.scenario)
        # explicit flags override the file
        for flag in ("seed", "gst", "max_ticks", "crypto_mode"):
            val = getattr(args, flag)
            if val is not None and val != _DEFAULTS.get(flag):
                setattr(spec, flag, val)
        spec.check()
    else:
        spec = _spec_from_flags(args)
        spec.check()
    res = run_spec(spec)
    text = res.trace.to_jsonl()
    if args.out:
        Path(args.out).write_text(text)
    if args.metrics:
        Path(args.metrics).write_text(metrics_csv([res.metrics_row()]))
    if args.save_scenario:
        Path(args.save_scenario).write_text(spec.dumps())
    report = {"scenario": spec.name or spec.protocol, "verdict": res.verdict,
              "metrics": {"msgs_after_gst": res.metrics.msgs_after_gst,
                          "words_after_gst": res.metrics.words_after_gst,
                          "latency": res.metrics.latency}}
    print(json.dumps(jsonable(report), indent=2, sort_keys=True))
    return 0 if res.ok else 3


def cmd_bench(args) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    try:
        rows = sweep(args.protocol, sizes, seed=args.seed)
    except BenchAbort as exc:
        print(f"bench aborted: {exc}", file=sys.stderr)
        print(exc.spec.dumps(), file=sys.stderr)
        return 3
    text = metrics_csv([r.as_metrics() for r in rows])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(summary(rows))
    flagged = flag_ratios(doubling_ratios(rows))
    if flagged and args.protocol.endswith("auth") and "nonauth" not in args.protocol:
        print(f"{len(flagged)} doubling ratio(s) outside [3.0, 5.0]")
    return 0


def cmd_check(args) -> int:
    spec = ScenarioSpec.load(args.scenario)
    verdict = check_trace_text(Path(args.trace).read_text(), spec)
    print(json.dumps(jsonable(verdict), indent=2, sort_keys=True))
    return 0 if verdict["ok"] else 3


_DEFAULTS = {"seed": 0, "gst": 0, "max_ticks": None, "crypto_mode": "fast"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="validus", description="Validity properties and the protocols that solve them.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, defaults=True):
        p.add_argument("--n", type=int, default=4)
        p.add_argument("--t", type=int, default=1)
        p.add_argument("--values", default="0,1", help="comma-separated input values")
        p.add_argument("--outputs", default=None, help="output values, if they differ")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--builtin", help="strong, weak, correct_proposal, interval, constant:V")
        g.add_argument("--property-file", help="JSON property file")

    c = sub.add_parser("classify", help="classify a validity property")
    common(c)
    c.add_argument("--out", help="write the Lambda table as CSV here")
    c.add_argument("--quiet", action="store_true", help="do not print the Lambda table")
    c.set_defaults(func=cmd_classify)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("scenario", nargs="?", help="scenario JSON file")
    common(r)
    r.add_argument("--protocol", default="universal/auth", choices=PROTOCOLS)
    r.add_argument("--adversary", default=None, help="silent, crash_at:T, equivocate_leader, lower_bound")
    r.add_argument("--gst", type=int, default=0)
    r.add_argument("--delta", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--schedule", default="sync", help="sync, immediate, max_delay, random")
    r.add_argument("--max-ticks", type=int, default=None)
    r.add_argument("--crypto-mode", default="fast", choices=MODES)
    r.add_argument("--out", help="write the JSON-lines trace here")
    r.add_argument("--metrics", help="write a one-row metrics CSV here")
    r.add_argument("--save-scenario", help="write the effective scenario JSON here")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="message complexity sweep (silent faults, GST = 0)")
    b.add_argument("--protocol", default="vector/auth", choices=PROTOCOLS)
    b.add_argument("--sizes", default="4,8,16")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV output path (default: stdout)")
    b.set_defaults(func=cmd_bench)

    k = sub.add_parser("check", help="re-validate an exported trace")
    k.add_argument("trace")
    k.add_argument("--scenario", required=True)
    k.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"error: {exc} (raise VALIDUS_BUDGET to allow more)", file=sys.stderr)
        return 2
    except (SchemaError, UnknownAdversary, LambdaUndefined, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
