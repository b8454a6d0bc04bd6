"""Deterministic virtual multicore machine.

Replaces the hardware layer: N simulated cores, an inter-core FIFO channel
carrying boot messages and scheduler-invocation signals, the big-lock
critical section, per-core virtual clocks, and trace recording.

Execution model: thread bodies are generators that yield syscalls; every
kernel call boundary is an interleaving point.  At each step a seeded
policy picks one core with enabled work.  A kernel call spans two steps,
acquire+execute then release, so the global spinlock is observably held
across interleaving points and cross-core spins show up in the trace.
Identical (config, scenario, seed) runs produce byte-identical traces.
"""

from __future__ import annotations

import random
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from . import api, trace as tr
from .errors import ConfigError, KernelPanic, SimulationDeadlockError, StateError
from .kernel import Kernel, KernelConfig, ThreadState
from .sync import PARKED, PiMutex

DETERMINISTIC = "deterministic"
HOST_PARALLEL = "host_parallel"

RANDOM_POLICY = "random"
ROUND_ROBIN_POLICY = "round_robin"

_FRESH = type("_Fresh", (), {"__repr__": lambda self: "<fresh>"})()

# Core micro-states for the two-phase kernel entry.
_NORMAL = "normal"
_ACQUIRE = "acquire"
_RELEASE = "release"


@dataclass
class BootMsg:
    """Stands in for the vector table, stack pointer, and entry function."""

    payload: Any


class _ThreadExec:
    __slots__ = ("gen", "staged")

    def __init__(self, gen):
        self.gen = gen
        self.staged: Any = _FRESH


class _Core:
    __slots__ = ("index", "booted", "irq_enabled", "sched_pending", "clock",
                 "depth", "micro", "pending_act", "spin_traced", "channel")

    def __init__(self, index: int):
        self.index = index
        self.booted = False
        self.irq_enabled = False
        self.sched_pending = False
        self.clock = 0
        self.depth = 0
        self.micro = _NORMAL
        self.pending_act: tuple | None = None
        self.spin_traced = False
        self.channel: deque[tuple[str, Any, int]] = deque()


class KernelHandle:
    """Build-time facade handed to scenarios: create threads and mutexes."""

    def __init__(self, platform: "DeterministicPlatform"):
        self._platform = platform

    @property
    def kernel(self) -> Kernel:
        return self._platform.kernel

    @property
    def num_cores(self) -> int:
        return self._platform.kernel.num_cores

    def all_cores_mask(self) -> int:
        return (1 << self.num_cores) - 1

    def create_thread(self, body: Callable, prio: int,
                      affinity: int | None = None, name: str = "") -> int:
        if affinity is None:
            affinity = self.all_cores_mask()
        self._platform.critical_enter(0)
        try:
            return self.kernel.create_thread(body, prio, affinity, name=name)
        finally:
            self._platform.critical_exit(0)

    def new_mutex(self, name: str = "") -> PiMutex:
        return PiMutex(self.kernel, name)


class DeterministicPlatform:
    """Single-threaded engine with seed-driven core interleaving."""

    backend = DETERMINISTIC

    def __init__(self, config: KernelConfig, seed: int = 0,
                 policy: str = RANDOM_POLICY, max_steps: int = 20_000_000):
        if policy not in (RANDOM_POLICY, ROUND_ROBIN_POLICY):
            raise ConfigError(f"unknown interleaving policy {policy!r}")
        self.config = config
        self.cost_model = config.cost_model
        self.seed = seed
        self.policy = policy
        self.max_steps = max_steps
        self.rng = random.Random(seed)
        self.cores = [_Core(i) for i in range(config.num_cores)]
        self.cores[0].booted = True  # core 0 runs the startup path itself
        self.tracelog = tr.Trace(self.backend, seed, config.num_cores)
        self.execs: dict[int, _ThreadExec] = {}
        self.kernel = Kernel(config, platform=self)
        self._exec_core = 0
        self._lock_owner: int | None = None
        self._lock_free_at = 0
        self._rr_next = 0
        self._last_snapshot_mutation = -1
        self._steps = 0

    # ------------------------------------------------------------------
    # PlatformServices interface (called by the kernel under the big lock)
    # ------------------------------------------------------------------
    def exec_core(self) -> int:
        return self._exec_core

    def assert_critical(self) -> None:
        if self._lock_owner is None:
            raise KernelPanic("kernel state touched outside the critical section")

    def charge(self, cost_kind: str) -> None:
        self.cores[self._exec_core].clock += getattr(self.cost_model, cost_kind)

    def now(self, core: int) -> int:
        return self.cores[core].clock

    def global_time(self) -> int:
        return max(c.clock for c in self.cores)

    def trace(self, kind: str, core: int, frm: int | None = None,
              to: int | None = None, **data: Any) -> None:
        self.tracelog.append(tr.TraceRecord(self.cores[core].clock, core, kind,
                                            frm, to, data))

    def request_schedule(self, core: int) -> None:
        if core == self._exec_core:
            self.cores[core].sched_pending = True
        else:
            sender_clock = self.cores[self._exec_core].clock
            self.cores[core].channel.append(("sched", None, sender_clock))

    def send_boot(self, core: int, payload: Any) -> None:
        if core == 0:
            raise StateError("core 0 boots itself")
        target = self.cores[core]
        if target.booted or any(kind == "boot" for kind, *_ in target.channel):
            raise StateError(f"core {core} already booted")
        self.trace(tr.START_CORE, self._exec_core, to=None, target=core)
        target.channel.append(("boot", BootMsg(payload), self.cores[self._exec_core].clock))

    def enable_sched_irq(self, core: int) -> None:
        self.cores[core].irq_enabled = True
        self.trace(tr.SCHED_IRQ, core)

    def register_thread_body(self, tid: int, entry: Any) -> None:
        self.execs.pop(tid, None)
        if entry is None:
            return
        gen = entry(api.ThreadCtx(tid))
        if not hasattr(gen, "send"):
            raise ConfigError(f"thread body {entry!r} is not a generator function")
        self.execs[tid] = _ThreadExec(gen)

    def stage_result(self, tid: int, value: Any) -> None:
        ex = self.execs.get(tid)
        if ex is not None:
            ex.staged = value

    # ------------------------------------------------------------------
    # Critical section (interrupt masking + global spinlock)
    # ------------------------------------------------------------------
    def critical_enter(self, core: int | None = None) -> int:
        core = self._exec_core if core is None else core
        c = self.cores[core]
        if c.depth == 0:
            if self._lock_owner is not None and self._lock_owner != core:
                raise StateError(
                    f"core {core} entered a contended critical section outside the engine")
            self._lock_owner = core
            c.clock = max(c.clock, self._lock_free_at)
            self.trace(tr.LOCK, core)
        c.depth += 1
        return c.depth

    def critical_exit(self, core: int | None = None) -> None:
        core = self._exec_core if core is None else core
        c = self.cores[core]
        if c.depth == 0:
            raise StateError(f"critical_exit without enter on core {core}")
        c.depth -= 1
        if c.depth == 0:
            self._lock_owner = None
            self._lock_free_at = c.clock
            self.trace(tr.UNLOCK, core)

    def critical(self, core: int | None = None):
        """Scope-bound guard for the critical section."""
        platform = self

        class _Guard:
            def __enter__(self):
                platform.critical_enter(core)
                return self

            def __exit__(self, *exc):
                platform.critical_exit(core)
                return False

        return _Guard()

    def trigger_schedule_on(self, core: int) -> None:
        """Public alias used by tests and scenarios."""
        self.request_schedule(core)

    # ------------------------------------------------------------------
    # Engine
    # ------------------------------------------------------------------
    def _enabled(self, core: int) -> bool:
        c = self.cores[core]
        if not c.booted:
            return bool(c.channel)
        if c.micro == _RELEASE:
            return True
        if c.micro == _ACQUIRE:
            return self._lock_owner is None or self._lock_owner == core
        if c.irq_enabled and (c.channel or c.sched_pending):
            return True
        tid = self.kernel.current[core]
        if tid is None:
            return False
        t = self.kernel.tcbs[tid]
        if t.is_idle or t.state is not ThreadState.RUNNING:
            return False
        ex = self.execs.get(tid)
        return ex is not None and ex.staged is not PARKED

    def _pick_core(self, enabled: list[int]) -> int:
        if self.policy == ROUND_ROBIN_POLICY:
            for offset in range(self.config.num_cores):
                core = (self._rr_next + offset) % self.config.num_cores
                if core in enabled:
                    self._rr_next = (core + 1) % self.config.num_cores
                    return core
        return enabled[self.rng.randrange(len(enabled))]

    def _step(self, core: int) -> None:
        c = self.cores[core]
        self._exec_core = core
        if not c.booted:
            kind, msg, sent = c.channel.popleft()
            if kind != "boot":
                raise KernelPanic(f"core {core} received {kind} before boot")
            c.clock = max(c.clock, sent) + self.cost_model.ipi_delivery
            c.booted = True
            self.trace(tr.BOOT, core)
            self.enable_sched_irq(core)
            c.sched_pending = True
            return
        if c.micro == _RELEASE:
            self.critical_exit(core)
            c.micro = _NORMAL
            c.pending_act = None
            return
        if c.micro == _ACQUIRE:
            self._try_acquire_run(core)
            return
        if c.channel and c.irq_enabled:
            kind, msg, sent = c.channel.popleft()
            if kind != "sched":
                raise KernelPanic(f"unexpected message {kind} on booted core {core}")
            c.clock = max(c.clock, sent) + self.cost_model.ipi_delivery
            self.kernel.stats.ipis += 1
            self.trace(tr.IPI, core)
            c.sched_pending = True
            return
        if c.sched_pending and c.irq_enabled:
            c.sched_pending = False
            c.pending_act = ("schedule", None, None)
            c.micro = _ACQUIRE
            self._try_acquire_run(core)
            return
        self._advance_thread(core)

    def _advance_thread(self, core: int) -> None:
        c = self.cores[core]
        tid = self.kernel.current[core]
        ex = self.execs[tid]
        value = None if ex.staged is _FRESH else ex.staged
        ex.staged = PARKED
        try:
            sc = ex.gen.send(value)
        except StopIteration:
            c.pending_act = ("op", api.Exit(), tid)
            c.micro = _ACQUIRE
            self._try_acquire_run(core)
            return
        if not sc.kernel_call:
            if isinstance(sc, api.Compute):
                c.clock += sc.ticks
                ex.staged = sc.fn() if sc.fn is not None else None
            elif isinstance(sc, api.Mark):
                data = {"label": sc.label, "gt": self.global_time()}
                data.update(self.kernel.stats.as_dict())
                self.trace(tr.MARK, core, **data)
                self.tracelog.mark_walls.append(time.perf_counter_ns())
                ex.staged = None
            else:
                raise ConfigError(f"unknown non-kernel syscall {sc!r}")
            return
        c.pending_act = ("op", sc, tid)
        c.micro = _ACQUIRE
        self._try_acquire_run(core)

    def _try_acquire_run(self, core: int) -> None:
        c = self.cores[core]
        if self._lock_owner is not None and self._lock_owner != core:
            if not c.spin_traced:
                self.trace(tr.SPIN, core)
                c.spin_traced = True
            return
        c.spin_traced = False
        self.critical_enter(core)
        kind, sc, tid = c.pending_act
        try:
            if kind == "schedule":
                self.kernel.schedule(core)
            else:
                result = sc.apply(self.kernel, core)
                if result is not PARKED:
                    self.stage_result(tid, result)
                if self.kernel.thread_state(tid) is ThreadState.INVALID:
                    self.execs.pop(tid, None)
        except BaseException:
            self.critical_exit(core)
            c.micro = _NORMAL
            c.pending_act = None
            raise
        c.micro = _RELEASE

    # ------------------------------------------------------------------
    # Run driver
    # ------------------------------------------------------------------
    def _quiescent(self) -> bool:
        if not self.kernel.started:
            return False
        for c in self.cores:
            if (not c.booted or c.channel or c.sched_pending
                    or c.micro != _NORMAL or c.depth):
                return False
            if self.kernel.current[c.index] is None:
                return False
        return True

    def _maybe_snapshot(self) -> None:
        if not self._quiescent():
            return
        if self.kernel.mutation_counter == self._last_snapshot_mutation:
            return
        self._last_snapshot_mutation = self.kernel.mutation_counter
        self.tracelog.snapshots.append(
            self.kernel.snapshot(event_index=len(self.tracelog.events)))

    def run(self, scenario) -> tr.Trace:
        handle = KernelHandle(self)
        scenario.build(handle)
        done_fn = getattr(scenario, "done", None) or _default_done
        self._exec_core = 0
        with self.critical(0):
            self.kernel.start_threading()
        while True:
            enabled = [core.index for core in self.cores if self._enabled(core.index)]
            if not enabled:
                if done_fn(self.kernel):
                    break
                err = SimulationDeadlockError(self.kernel.blocked_dump())
                err.trace = self.tracelog
                raise err
            self._step(self._pick_core(enabled))
            self._steps += 1
            if self._steps > self.max_steps:
                raise RuntimeError(f"step budget {self.max_steps} exceeded; "
                                   f"scenario {scenario.name!r} does not settle")
            self._maybe_snapshot()
        self.tracelog.final_stats = self.kernel.stats.as_dict()
        return self.tracelog


def _default_done(kernel: Kernel) -> bool:
    return not kernel.app_threads()


def quiescent_states(trace: tr.Trace) -> list:
    """Kernel snapshots at points with no pending scheduler interrupt and no
    in-flight signal; scheduling invariants are checked here."""
    if trace.backend != DETERMINISTIC:
        raise ConfigError("quiescent states are only defined for deterministic traces")
    return list(trace.snapshots)


def run(config: KernelConfig, scenario, backend: str = DETERMINISTIC,
        seed: int = 0, policy: str = RANDOM_POLICY,
        max_steps: int = 20_000_000) -> tr.Trace:
    """Execute a scenario on a fresh kernel+platform and return its trace."""
    if backend == DETERMINISTIC:
        platform = DeterministicPlatform(config, seed=seed, policy=policy,
                                         max_steps=max_steps)
        return platform.run(scenario)
    if backend == HOST_PARALLEL:
        from .parallel import HostParallelPlatform

        platform = HostParallelPlatform(config, seed=seed)
        return platform.run(scenario)
    raise ConfigError(f"unknown backend {backend!r}")
