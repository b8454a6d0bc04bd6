"""Host-parallel backend: one worker thread per virtual core.

The global spinlock becomes a real lock, the inter-core channel a condition
variable, and trace timestamps wall-clock nanoseconds.  Kernel state is
touched only under the lock; `Compute` payloads run outside it, so GIL-free
workloads execute truly in parallel.  Determinism is not guaranteed.
"""

from __future__ import annotations

import os
import sys
import threading
import time
from collections import deque
from typing import Any

from . import api, trace as tr
from .errors import KernelPanic, SimulationDeadlockError, StateError
from .kernel import Kernel, KernelConfig, ThreadState
from .sync import PARKED

_PARK_TIMEOUT = 0.01    # seconds; bounded so stop/deadlock checks stay live
_SWITCH_INTERVAL = 0.0002  # GIL handoff latency bound while workers run
_SPIN_SECONDS = 0.004   # poll window before parking on the condition; sized
                        # to cover inter-iteration gaps of ms-scale workloads
_FRESH = type("_FreshP", (), {"__repr__": lambda self: "<fresh>"})()


class _ThreadExec:
    __slots__ = ("gen", "staged")

    def __init__(self, gen):
        self.gen = gen
        self.staged: Any = _FRESH


class HostParallelPlatform:
    backend = "host_parallel"

    def __init__(self, config: KernelConfig, seed: int = 0,
                 trace_critical_sections: bool = False):
        self.config = config
        self.seed = seed
        self._trace_crit = trace_critical_sections
        self.tracelog = tr.Trace(self.backend, seed, config.num_cores)
        self.kernel = Kernel(config, platform=self)
        self.execs: dict[int, _ThreadExec] = {}
        self._big = threading.Lock()
        self._lock_owner: int | None = None
        self._depth = [0] * config.num_cores
        self._cv = threading.Condition()
        self._channels: list[deque] = [deque() for _ in range(config.num_cores)]
        self._sched_pending = [False] * config.num_cores
        self._irq_enabled = [False] * config.num_cores
        self._booted = [False] * config.num_cores
        self._booted[0] = True
        self._waiting = 0
        self._stop = False
        self._trace_lock = threading.Lock()
        self._local = threading.local()
        self._t0 = time.perf_counter_ns()
        self._worker_error: BaseException | None = None

    # ------------------------------------------------------------------
    # PlatformServices
    # ------------------------------------------------------------------
    def exec_core(self) -> int:
        return getattr(self._local, "core", 0)

    def assert_critical(self) -> None:
        if self._lock_owner != self.exec_core():
            raise KernelPanic("kernel state touched outside the critical section")

    def charge(self, cost_kind: str) -> None:
        pass  # wall-clock backend: time is measured, not modeled

    def _now(self) -> int:
        return time.perf_counter_ns() - self._t0

    def trace(self, kind: str, core: int, frm: int | None = None,
              to: int | None = None, **data: Any) -> None:
        rec = tr.TraceRecord(self._now(), core, kind, frm, to, data)
        with self._trace_lock:
            self.tracelog.append(rec)

    def _notify(self) -> None:
        # The waiting check must happen under the lock: a consumer between
        # its own work re-check and cv.wait() holds the lock, so acquiring
        # it here orders this producer's work publication before the wait.
        with self._cv:
            if self._waiting:
                self._cv.notify_all()

    def request_schedule(self, core: int) -> None:
        if core == self.exec_core():
            self._sched_pending[core] = True
        else:
            self._channels[core].append("sched")
            self._notify()

    def send_boot(self, core: int, payload: Any) -> None:
        if core == 0:
            raise StateError("core 0 boots itself")
        if self._booted[core]:
            raise StateError(f"core {core} already booted")
        self.trace(tr.START_CORE, self.exec_core(), target=core)
        self._channels[core].append(("boot", payload))
        with self._cv:
            self._cv.notify_all()

    def enable_sched_irq(self, core: int) -> None:
        self._irq_enabled[core] = True
        self.trace(tr.SCHED_IRQ, core)

    def register_thread_body(self, tid: int, entry: Any) -> None:
        self.execs.pop(tid, None)
        if entry is None:
            return
        gen = entry(api.ThreadCtx(tid))
        self.execs[tid] = _ThreadExec(gen)

    def stage_result(self, tid: int, value: Any) -> None:
        ex = self.execs.get(tid)
        if ex is not None:
            ex.staged = value
        self._notify()

    # ------------------------------------------------------------------
    # Critical section
    # ------------------------------------------------------------------
    def critical_enter(self, core: int | None = None) -> int:
        core = self.exec_core() if core is None else core
        if self._depth[core] == 0:
            if not self._big.acquire(blocking=False):
                if self._trace_crit:
                    self.trace(tr.SPIN, core)
                self._big.acquire()
            self._lock_owner = core
            if self._trace_crit:
                self.trace(tr.LOCK, core)
        self._depth[core] += 1
        return self._depth[core]

    def critical_exit(self, core: int | None = None) -> None:
        core = self.exec_core() if core is None else core
        if self._depth[core] == 0:
            raise StateError(f"critical_exit without enter on core {core}")
        self._depth[core] -= 1
        if self._depth[core] == 0:
            if self._trace_crit:
                self.trace(tr.UNLOCK, core)
            self._lock_owner = None
            self._big.release()
            self._notify()

    def critical(self, core: int | None = None):
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
        self.request_schedule(core)

    # ------------------------------------------------------------------
    # Worker loop
    # ------------------------------------------------------------------
    def _advance_ready(self, core: int) -> bool:
        tid = self.kernel.current[core]
        if tid is None:
            return False
        t = self.kernel.tcbs[tid]
        if t.is_idle or t.state is not ThreadState.RUNNING:
            return False
        ex = self.execs.get(tid)
        return ex is not None and ex.staged is not PARKED

    def _has_work(self, core: int) -> bool:
        return (self._stop
                or bool(self._channels[core])
                or (self._sched_pending[core] and self._irq_enabled[core])
                or self._advance_ready(core))

    def _worker(self, core: int) -> None:
        self._local.core = core
        try:
            # One host CPU per virtual core where possible; without this the
            # host scheduler periodically co-locates both workers on one CPU
            # and serializes what should run in parallel.
            cpus = os.cpu_count() or 1
            os.sched_setaffinity(0, {core % cpus})
        except OSError:
            pass
        try:
            if core == 0:
                with self.critical(core):
                    self.kernel.start_threading()
            self._run_core(core)
        except BaseException as exc:  # propagate to run()
            self._worker_error = self._worker_error or exc
            with self._cv:
                self._stop = True
                self._cv.notify_all()

    def _run_core(self, core: int) -> None:
        while not self._stop:
            if not self._booted[core]:
                with self._cv:
                    while not self._channels[core] and not self._stop:
                        self._cv.wait(_PARK_TIMEOUT)
                if self._stop:
                    return
                kind, payload = self._channels[core].popleft()
                if kind != "boot":
                    raise KernelPanic(f"core {core} received {kind} before boot")
                self._booted[core] = True
                self.trace(tr.BOOT, core)
                self.enable_sched_irq(core)
                self._sched_pending[core] = True
                continue
            if self._channels[core]:
                msg = self._channels[core].popleft()
                if msg != "sched":
                    raise KernelPanic(f"unexpected message {msg!r} on core {core}")
                with self._trace_lock:
                    self.kernel.stats.ipis += 1
                self.trace(tr.IPI, core)
                self._sched_pending[core] = True
                continue
            if self._sched_pending[core] and self._irq_enabled[core]:
                self._sched_pending[core] = False
                with self.critical(core):
                    self.kernel.schedule(core)
                continue
            if self._advance_ready(core):
                self._advance(core)
                continue
            self._idle_wait(core)

    def _advance(self, core: int) -> None:
        tid = self.kernel.current[core]
        ex = self.execs[tid]
        value = None if ex.staged is _FRESH else ex.staged
        ex.staged = PARKED
        try:
            sc = ex.gen.send(value)
        except StopIteration:
            with self.critical(core):
                self.kernel.exit_current(core)
                self.execs.pop(tid, None)
            return
        if not sc.kernel_call:
            if isinstance(sc, api.Compute):
                ex.staged = sc.fn() if sc.fn is not None else None
            elif isinstance(sc, api.Mark):
                with self.critical(core):
                    data = {"label": sc.label, "gt": self._now()}
                    data.update(self.kernel.stats.as_dict())
                    self.trace(tr.MARK, core, **data)
                    self.tracelog.mark_walls.append(time.perf_counter_ns())
                ex.staged = None
            else:
                raise KernelPanic(f"unknown non-kernel syscall {sc!r}")
            return
        with self.critical(core):
            result = sc.apply(self.kernel, core)
            if result is not PARKED:
                self.stage_result(tid, result)
            if self.kernel.thread_state(tid) is ThreadState.INVALID:
                self.execs.pop(tid, None)

    def _idle_wait(self, core: int) -> None:
        # Poll with sched_yield first: this host's timers round tiny sleeps
        # up to ~1 ms, while sleep(0) wakes in single-digit microseconds and
        # still releases the GIL every pass.
        deadline = time.perf_counter() + _SPIN_SECONDS
        while time.perf_counter() < deadline:
            if self._has_work(core):
                return
            time.sleep(0)
        with self._cv:
            if self._has_work(core):
                return
            self._waiting += 1
            try:
                self._cv.wait(_PARK_TIMEOUT)
            finally:
                self._waiting -= 1

    # ------------------------------------------------------------------
    # Run driver
    # ------------------------------------------------------------------
    def run(self, scenario) -> tr.Trace:
        from .platform import KernelHandle, _default_done

        handle = KernelHandle(self)
        scenario.build(handle)
        done_fn = getattr(scenario, "done", None) or _default_done
        old_interval = sys.getswitchinterval()
        sys.setswitchinterval(_SWITCH_INTERVAL)
        try:
            return self._run_workers(scenario, done_fn)
        finally:
            sys.setswitchinterval(old_interval)

    def _run_workers(self, scenario, done_fn) -> tr.Trace:
        workers = [threading.Thread(target=self._worker, args=(core,),
                                    name=f"vcore{core}", daemon=True)
                   for core in range(self.config.num_cores)]
        for w in workers:
            w.start()
        deadlock: SimulationDeadlockError | None = None
        while True:
            time.sleep(0.0005)
            if self._stop:
                break
            with self._cv:
                quiet = (self._waiting == self.config.num_cores
                         and not any(self._channels)
                         and not any(self._sched_pending[c] and self._irq_enabled[c]
                                     for c in range(self.config.num_cores))
                         and all(self._booted))
            if not quiet:
                continue
            # All workers are parked and no events are in flight: the state
            # is frozen, so it is safe to inspect the kernel now.
            with self._big:
                if any(self._advance_ready(c) for c in range(self.config.num_cores)):
                    continue
                if done_fn(self.kernel):
                    pass
                else:
                    deadlock = SimulationDeadlockError(self.kernel.blocked_dump())
            with self._cv:
                self._stop = True
                self._cv.notify_all()
            break
        for w in workers:
            w.join(timeout=10.0)
        if self._worker_error is not None:
            raise self._worker_error
        if deadlock is not None:
            deadlock.trace = self.tracelog
            raise deadlock
        self.tracelog.final_stats = self.kernel.stats.as_dict()
        return self.tracelog
