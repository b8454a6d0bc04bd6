"""Trace recording and JSONL export for platform runs."""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

# Event kinds emitted by the platform and kernel.
BOOT = "boot"
START_CORE = "start_core"
CREATE = "create"
SCHED_IRQ = "sched_irq"          # scheduler interrupt enabled on a core
SCHEDULE = "schedule"
CONTEXT_SWITCH = "context_switch"
MIGRATION = "migration"
IPI = "ipi"
FLAG_SET = "flag_set"
LOCK = "lock"                    # global critical section entered
UNLOCK = "unlock"                # global critical section left
SPIN = "spin"                    # waiting for the global spinlock
IDLE_ENTER = "idle_enter"
MARK = "mark"
WAKE = "wake"
EXIT = "exit"
MUTEX_LOCK = "mutex_lock"
MUTEX_UNLOCK = "mutex_unlock"


@dataclass(frozen=True)
class TraceRecord:
    t: int
    core: int
    kind: str
    frm: int | None = None
    to: int | None = None
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {"t": self.t, "core": self.core, "kind": self.kind,
               "from": self.frm, "to": self.to, "data": self.data}
        return json.dumps(obj, sort_keys=False, separators=(",", ":"))


class Trace:
    """Ordered event log of one platform run, plus oracle side-channels."""

    def __init__(self, backend: str, seed: int, num_cores: int):
        self.backend = backend
        self.seed = seed
        self.num_cores = num_cores
        self.events: list[TraceRecord] = []
        self.snapshots: list = []        # quiescent KernelSnapshot instances
        self.mark_walls: list[int] = []  # host ns at each mark (side channel)
        self.final_stats: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.events)

    def append(self, record: TraceRecord) -> None:
        self.events.append(record)

    def of_kind(self, *kinds: str) -> list[TraceRecord]:
        return [e for e in self.events if e.kind in kinds]

    def on_core(self, core: int) -> list[TraceRecord]:
        return [e for e in self.events if e.core == core]

    def switch_signature(self) -> bytes:
        """Canonical bytes of the context-switch sequence, tick-free.

        Tick timestamps are excluded on purpose: strategies may spend
        different tick counts on runqueue maintenance while making the same
        switching decisions, and this signature captures the decisions.
        """
        rows = [(e.core, e.frm, e.to, bool(e.data.get("preempted")))
                for e in self.events if e.kind == CONTEXT_SWITCH]
        return repr(rows).encode()

    def jsonl(self) -> str:
        buf = io.StringIO()
        for e in self.events:
            buf.write(e.to_json())
            buf.write("\n")
        return buf.getvalue()

    def write_jsonl(self, path: str | os.PathLike) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fp:
                fp.write(self.jsonl())
        except OSError as exc:
            raise OSError(f"cannot write trace to {path}: {exc}") from exc

    def check_per_core_monotonic(self) -> None:
        last: dict[int, int] = {}
        for e in self.events:
            if e.core in last and e.t < last[e.core]:
                raise AssertionError(
                    f"per-core time regressed on core {e.core}: {last[e.core]} -> {e.t}")
            last[e.core] = e.t


def iter_mark_windows(trace: Trace) -> Iterable[tuple[TraceRecord, TraceRecord]]:
    """Consecutive pairs of mark events (iteration windows)."""
    marks = trace.of_kind(MARK)
    return zip(marks, marks[1:])
