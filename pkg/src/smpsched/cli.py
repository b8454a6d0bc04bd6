"""Command-line harness: run benchmarks, the work-conservation checker,
and scenario traces."""

from __future__ import annotations

import argparse
import sys

from .bench import (
    BENCHMARK_NAMES,
    BenchmarkSpec,
    DEFAULT_SIZES,
    export_report,
    oracle_check_work_conservation,
    run_benchmark,
)
from .errors import SimulationDeadlockError, SmpschedError
from .kernel import DYNAMIC, REALLOC, SINGLE, KernelConfig
from .platform import DETERMINISTIC, run
from .scenarios import NAMED_SCENARIOS

_STRATEGY_FLAGS = {"single": SINGLE, "dynamic": DYNAMIC, "realloc": REALLOC}


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sizes list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smpsched",
        description="Benchmarks and checks for the simulated multicore scheduler.")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a benchmark and export its report")
    bench.add_argument("name", choices=BENCHMARK_NAMES)
    bench.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="dynamic")
    bench.add_argument("--cores", type=int, default=1)
    bench.add_argument("--iterations", type=int, default=1000)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--sizes", type=_parse_sizes, default=DEFAULT_SIZES,
                       help="comma-separated even matrix sizes (matmul only)")
    bench.add_argument("--format", choices=("csv", "json"), default="csv")
    bench.add_argument("--out", default=None, help="output path (default: stdout)")

    check = sub.add_parser("check", help="run an oracle checker")
    check.add_argument("checker", choices=("work-conservation",))
    check.add_argument("--sequences", type=int, default=100)
    check.add_argument("--cores", type=int, default=2)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="dynamic")

    trace_cmd = sub.add_parser("trace", help="run a scenario and export its JSONL trace")
    trace_cmd.add_argument("scenario", choices=sorted(NAMED_SCENARIOS))
    trace_cmd.add_argument("--seed", type=int, default=0)
    trace_cmd.add_argument("--cores", type=int, default=1)
    trace_cmd.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="dynamic")
    trace_cmd.add_argument("--iterations", type=int, default=10)
    trace_cmd.add_argument("--out", default=None, help="output path (default: stdout)")
    return parser


def _cmd_bench(args) -> int:
    spec = BenchmarkSpec(name=args.name, strategy=_STRATEGY_FLAGS[args.strategy],
                         num_cores=args.cores, iterations=args.iterations,
                         sizes=tuple(args.sizes), seed=args.seed)
    report = run_benchmark(spec)
    if args.out:
        export_report(report, args.format, args.out)
        print(f"wrote {args.format} report to {args.out}")
    else:
        if args.format == "json":
            import json

            print(json.dumps(report.to_json_obj(), indent=2))
        else:
            print("benchmark,strategy,cores,iterations,metric,mean,stddev")
            for m in report.metrics:
                print(f"{report.benchmark},{report.strategy},{report.cores},"
                      f"{report.iterations},{m.metric},{m.mean!r},{m.stddev!r}")
    return 0


def _cmd_check(args) -> int:
    config = KernelConfig(num_cores=args.cores, strategy=_STRATEGY_FLAGS[args.strategy])
    violations = oracle_check_work_conservation(config, args.sequences, args.seed)
    if violations:
        print(f"{len(violations)} work-conservation violation(s):")
        for v in violations[:50]:
            print(f"  {v}")
        return 1
    print(f"ok: {args.sequences} sequences, 0 violations "
          f"(cores={args.cores}, strategy={args.strategy}, seed={args.seed})")
    return 0


def _cmd_trace(args) -> int:
    scenario = NAMED_SCENARIOS[args.scenario](iterations=args.iterations, seed=args.seed)
    config = KernelConfig(num_cores=args.cores, strategy=_STRATEGY_FLAGS[args.strategy])
    trace = run(config, scenario, backend=DETERMINISTIC, seed=args.seed)
    if args.out:
        trace.write_jsonl(args.out)
        print(f"wrote {len(trace.events)} events to {args.out}")
    else:
        sys.stdout.write(trace.jsonl())
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_trace(args)
    except SimulationDeadlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SmpschedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
