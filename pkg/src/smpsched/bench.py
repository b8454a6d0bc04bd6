"""Benchmark harness: runs the four workloads, aggregates per-iteration
metrics, exports CSV/JSON reports, and hosts the work-conservation checker."""

from __future__ import annotations

import csv
import json
import random
import statistics
from dataclasses import dataclass, field

from . import trace as tr
from .costs import CostModel
from .errors import ConfigError
from .kernel import DYNAMIC, KernelConfig, KernelSnapshot
from .platform import DETERMINISTIC, HOST_PARALLEL, run
from .scenarios import (
    FlagsPairs,
    FuzzScenario,
    MatMulSplit,
    PreemptFlag,
    YieldPingPong,
)

BENCHMARK_NAMES = ("yield", "flags", "preempt", "matmul")
DEFAULT_SIZES = tuple(range(10, 81, 10))

COUNT_METRICS = ("context_switches", "migrations", "ipis",
                 "scheduler_invocations", "rq_insertions", "rebalance_calls",
                 "preemptions")


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    strategy: str = DYNAMIC
    num_cores: int = 1
    iterations: int = 1000
    sizes: tuple[int, ...] = DEFAULT_SIZES
    seed: int = 0
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self) -> None:
        if self.name not in BENCHMARK_NAMES:
            raise ConfigError(f"unknown benchmark {self.name!r}; "
                              f"expected one of {BENCHMARK_NAMES}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        for size in self.sizes:
            if size < 2 or size % 2:
                raise ConfigError(f"matmul size {size} must be even (split into halves)")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(num_cores=self.num_cores, strategy=self.strategy,
                            cost_model=self.cost_model)


@dataclass(frozen=True)
class MetricStat:
    metric: str
    mean: float
    stddev: float


@dataclass
class BenchmarkReport:
    benchmark: str
    strategy: str
    cores: int
    iterations: int
    metrics: list[MetricStat] = field(default_factory=list)

    def metric(self, name: str) -> MetricStat:
        for m in self.metrics:
            if m.metric == name:
                return m
        raise KeyError(f"metric {name!r} not in report")

    def metric_names(self) -> list[str]:
        return [m.metric for m in self.metrics]

    def to_json_obj(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "strategy": self.strategy,
            "cores": self.cores,
            "iterations": self.iterations,
            "metrics": [{"metric": m.metric, "mean": m.mean, "stddev": m.stddev}
                        for m in self.metrics],
        }


def _stat(name: str, series: list[float]) -> MetricStat:
    if not series:
        return MetricStat(name, 0.0, 0.0)
    mean = statistics.fmean(series)
    stddev = statistics.pstdev(series) if len(series) > 1 else 0.0
    return MetricStat(name, mean, stddev)


def _mark_windows(marks) -> list[tuple[int, int]]:
    """Index pairs delimiting one iteration each.

    Scenarios emitting start/end labels measure only the region between
    them (anything in between iterations, like cool-downs, is excluded);
    plain marks fall back to consecutive pairs.
    """
    starts = [i for i, m in enumerate(marks) if m.data.get("label") == "start"]
    if starts:
        return [(i, i + 1) for i in starts
                if i + 1 < len(marks) and marks[i + 1].data.get("label") == "end"]
    return [(i, i + 1) for i in range(len(marks) - 1)]


def window_series(trace: tr.Trace) -> dict[str, list[float]]:
    """Per-iteration metric deltas between mark events."""
    marks = trace.of_kind(tr.MARK)
    walls = trace.mark_walls
    series: dict[str, list[float]] = {"makespan_ticks": [], "wall_ns": []}
    for name in COUNT_METRICS:
        series[name] = []
    for a, b in _mark_windows(marks):
        series["makespan_ticks"].append(float(marks[b].data["gt"] - marks[a].data["gt"]))
        series["wall_ns"].append(float(walls[b] - walls[a]))
        for name in COUNT_METRICS:
            series[name].append(float(marks[b].data[name] - marks[a].data[name]))
    return series


def _scenario_for(spec: BenchmarkSpec, size: int | None = None, execute: bool = True):
    if spec.name == "yield":
        return YieldPingPong(spec.iterations)
    if spec.name == "flags":
        return FlagsPairs(spec.iterations)
    if spec.name == "preempt":
        return PreemptFlag(spec.iterations)
    return MatMulSplit(size, spec.iterations, seed=spec.seed, execute=execute)


def run_benchmark(spec: BenchmarkSpec) -> BenchmarkReport:
    """Execute one benchmark configuration and aggregate its metrics.

    yield/flags/preempt run on the deterministic backend (virtual ticks and
    host wall time per iteration); matmul additionally runs each size on the
    host-parallel backend for real wall-clock timing, with the deterministic
    pass supplying the event counts.
    """
    report = BenchmarkReport(spec.name, spec.strategy, spec.num_cores, spec.iterations)
    if spec.name != "matmul":
        trace = run(spec.kernel_config(), _scenario_for(spec),
                    backend=DETERMINISTIC, seed=spec.seed)
        series = window_series(trace)
        for name in ("makespan_ticks", *COUNT_METRICS, "wall_ns"):
            report.metrics.append(_stat(name, series[name]))
        return report
    for size in spec.sizes:
        det = run(spec.kernel_config(), _scenario_for(spec, size, execute=False),
                  backend=DETERMINISTIC, seed=spec.seed)
        det_series = window_series(det)
        par_scenario = _scenario_for(spec, size, execute=True)
        par = run(spec.kernel_config(), par_scenario,
                  backend=HOST_PARALLEL, seed=spec.seed)
        par_series = window_series(par)
        for name in ("makespan_ticks", *COUNT_METRICS):
            report.metrics.append(_stat(f"{name}[n={size}]", det_series[name]))
        report.metrics.append(_stat(f"wall_ns[n={size}]", par_series["wall_ns"]))
    return report


def export_report(report: BenchmarkReport, fmt: str, path) -> None:
    """Write a report as CSV (one row per metric) or JSON."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fp:
            if fmt == "csv":
                writer = csv.writer(fp)
                writer.writerow(["benchmark", "strategy", "cores", "iterations",
                                 "metric", "mean", "stddev"])
                for m in report.metrics:
                    writer.writerow([report.benchmark, report.strategy, report.cores,
                                     report.iterations, m.metric,
                                     repr(m.mean), repr(m.stddev)])
            else:
                json.dump(report.to_json_obj(), fp, indent=2)
                fp.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


# ----------------------------------------------------------------------
# Work-conservation checker
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Violation:
    sequence: int
    seed: int
    snapshot_index: int
    tid: int
    effective: int
    core: int
    running_effective: int

    def __str__(self) -> str:
        return (f"seq {self.sequence} (seed {self.seed}) snapshot {self.snapshot_index}: "
                f"ready t{self.tid}@{self.effective} beats core {self.core} "
                f"running @{self.running_effective}")


def snapshot_violations(snapshot: KernelSnapshot, sequence: int = 0,
                        seed: int = 0, index: int = 0) -> list[Violation]:
    """Brute-force work-conservation check of one quiescent snapshot: no
    Ready thread may strictly outrank a running one on a permitted core."""
    out = []
    for tid, eff, affinity in snapshot.ready:
        for core, running_eff in enumerate(snapshot.running_eff):
            if affinity >> core & 1 and eff > running_eff:
                out.append(Violation(sequence, seed, index, tid, eff,
                                     core, running_eff))
    return out


def oracle_check_work_conservation(config: KernelConfig, num_sequences: int,
                                   seed: int, max_threads: int = 10) -> list[Violation]:
    """Run randomized scenarios and verify every quiescent state."""
    rng = random.Random(seed)
    violations: list[Violation] = []
    for sequence in range(num_sequences):
        scenario_seed = rng.getrandbits(48)
        interleave_seed = rng.getrandbits(48)
        scenario = FuzzScenario(scenario_seed, config.num_cores, max_threads=max_threads)
        trace = run(config, scenario, backend=DETERMINISTIC, seed=interleave_seed)
        for i, snap in enumerate(trace.snapshots):
            violations.extend(snapshot_violations(snap, sequence, scenario_seed, i))
    return violations
