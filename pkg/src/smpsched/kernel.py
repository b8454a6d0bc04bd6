"""Scheduler core: thread lifecycle, lazy context switching, the
interrupt-avoidance optimization, and both thread-to-core assignment
strategies behind one strategy interface.

All kernel state is owned by one logical critical section (the big lock);
there is no concurrency inside the kernel by design.  The hosting platform
is responsible for holding the lock around every entry point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .costs import CostModel
from .errors import (
    CapacityError,
    ConfigError,
    InvalidArgumentError,
    KernelPanic,
    NotFoundError,
    StateError,
)
from .runqueue import (
    HEAD,
    IDLE_PRIORITY,
    MIN_APP_PRIORITY,
    TAIL,
    RunQueue,
    check_priority,
)

SINGLE = "single"
DYNAMIC = "dynamic"
REALLOC = "realloc"
STRATEGIES = (SINGLE, DYNAMIC, REALLOC)

MAX_CORES = 8
FLAGS_WIDTH = 16
FLAGS_MASK_ALL = (1 << FLAGS_WIDTH) - 1


class ThreadState(enum.Enum):
    INVALID = "invalid"
    READY = "ready"
    RUNNING = "running"
    PAUSED = "paused"
    FLAG_BLOCKED = "flag_blocked"
    MUTEX_BLOCKED = "mutex_blocked"


BLOCKED_STATES = (ThreadState.PAUSED, ThreadState.FLAG_BLOCKED, ThreadState.MUTEX_BLOCKED)


class WaitMode(enum.Enum):
    ANY = "any"
    ALL = "all"


def check_affinity(mask: int, num_cores: int) -> int:
    """An affinity mask must enable at least one of the low num_cores bits."""
    if not isinstance(mask, int) or mask & ((1 << num_cores) - 1) == 0:
        raise InvalidArgumentError(f"affinity mask {mask!r} permits no core < {num_cores}")
    return mask


def check_flag_mask(mask: int) -> int:
    if not isinstance(mask, int) or mask <= 0 or mask > FLAGS_MASK_ALL:
        raise InvalidArgumentError(f"flag mask {mask!r} outside 1..{FLAGS_MASK_ALL:#x}")
    return mask


@dataclass
class Tcb:
    """Thread control block: identity, state, priorities, affinity, flags."""

    tid: int
    state: ThreadState = ThreadState.INVALID
    base_priority: int = MIN_APP_PRIORITY
    effective_priority: int = MIN_APP_PRIORITY
    affinity: int = 1
    flags_pending: int = 0
    flags_wait_mask: int = 0
    flags_wait_mode: WaitMode = WaitMode.ANY
    blocked_on: Any = None
    entry: Any = None
    running_on: int | None = None
    last_core: int | None = None
    is_idle: bool = False
    name: str = ""

    @property
    def alive(self) -> bool:
        return self.state is not ThreadState.INVALID


@dataclass
class KernelConfig:
    num_cores: int = 1
    max_threads: int = 16
    strategy: str = DYNAMIC
    cost_model: CostModel = field(default_factory=CostModel)
    priority_inheritance: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.num_cores <= MAX_CORES:
            raise ConfigError(f"num_cores {self.num_cores} outside 1..{MAX_CORES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.strategy == SINGLE and self.num_cores != 1:
            raise ConfigError("single-core optimized strategy requires num_cores == 1")
        if self.max_threads < self.num_cores + 1:
            raise ConfigError("max_threads leaves no room for idle threads plus one app thread")


@dataclass
class KernelStats:
    context_switches: int = 0
    preemptions: int = 0
    migrations: int = 0
    scheduler_invocations: int = 0
    ipis: int = 0
    rq_insertions: int = 0
    runqueue_changes: int = 0
    rebalance_calls: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


class PlatformServices(Protocol):
    """What the kernel needs from its hosting platform."""

    def request_schedule(self, core: int) -> None: ...

    def send_boot(self, core: int, payload: Any) -> None: ...

    def enable_sched_irq(self, core: int) -> None: ...

    def trace(self, kind: str, core: int, frm: int | None = None,
              to: int | None = None, **data: Any) -> None: ...

    def charge(self, cost_kind: str) -> None: ...

    def register_thread_body(self, tid: int, entry: Any) -> None: ...

    def stage_result(self, tid: int, value: Any) -> None: ...

    def assert_critical(self) -> None: ...

    def exec_core(self) -> int: ...


@dataclass(frozen=True)
class KernelSnapshot:
    """Immutable view of scheduling state at one instant (oracle support)."""

    event_index: int
    running: tuple[tuple[int, int | None], ...]      # core -> (tid | None paired as entries)
    running_eff: tuple[int, ...]                     # per-core effective priority (idle = 0)
    ready: tuple[tuple[int, int, int], ...]          # (tid, effective, affinity)
    blocked: tuple[tuple[int, str], ...]             # (tid, state name)


class Kernel:
    """Global-runqueue preemptive priority scheduler for N simulated cores."""

    def __init__(self, config: KernelConfig, platform: PlatformServices):
        self.config = config
        self.platform = platform
        self.num_cores = config.num_cores
        self.tcbs: list[Tcb] = [Tcb(tid=i) for i in range(config.max_threads)]
        self.runqueue = RunQueue(capacity=config.max_threads)
        self.current: list[int | None] = [None] * config.num_cores
        self.idle_tids: list[int | None] = [None] * config.num_cores
        self.mutexes: list[Any] = []
        self.stats = KernelStats()
        self.started = False
        self.mutation_counter = 0
        self.alloc_table: list[int | None] = [None] * config.num_cores
        self._yield_pending: list[bool] = [False] * config.num_cores
        self._strategy = _make_strategy(config.strategy)

    # ------------------------------------------------------------------
    # Small helpers
    # ------------------------------------------------------------------
    def tcb(self, tid: int) -> Tcb:
        if not 0 <= tid < len(self.tcbs):
            raise NotFoundError(f"thread id {tid} out of range")
        return self.tcbs[tid]

    def active_tcb(self, tid: int) -> Tcb:
        t = self.tcb(tid)
        if not t.alive:
            raise NotFoundError(f"thread {tid} is not active")
        return t

    def current_tid(self, core: int) -> int | None:
        return self.current[core]

    def effective_of_core(self, core: int) -> int:
        """Effective priority running on a core; -1 before the first dispatch."""
        tid = self.current[core]
        if tid is None:
            return -1
        return self.tcbs[tid].effective_priority

    def app_threads(self) -> list[Tcb]:
        return [t for t in self.tcbs if t.alive and not t.is_idle]

    def _touch(self) -> None:
        self.mutation_counter += 1

    def _rq_add(self, tid: int, prio: int, position: str) -> None:
        self.runqueue.add(tid, prio, position)
        self.stats.rq_insertions += 1
        self.platform.charge("runqueue_op")

    def _rq_del(self, tid: int, prio: int) -> None:
        self.runqueue.delete(tid, prio)
        self.platform.charge("runqueue_op")

    def _rq_advance(self, prio: int) -> None:
        self.runqueue.advance(prio)
        self.platform.charge("runqueue_op")

    def _rq_pop_filtered(self, core: int) -> int | None:
        tid = self.runqueue.pop_head_filtered(core, lambda t: self.tcbs[t].affinity)
        self.platform.charge("runqueue_op")
        return tid

    # ------------------------------------------------------------------
    # Thread lifecycle
    # ------------------------------------------------------------------
    def create_thread(self, entry: Any, prio: int, affinity: int, name: str = "") -> int:
        """Allocate a TCB, mark it Ready, enqueue it, maybe trigger scheduling."""
        self.platform.assert_critical()
        check_priority(prio)
        check_affinity(affinity, self.num_cores)
        tid = self._alloc_slot()
        t = self.tcbs[tid]
        t.state = ThreadState.READY
        t.base_priority = prio
        t.effective_priority = prio
        t.affinity = affinity
        t.flags_pending = 0
        t.flags_wait_mask = 0
        t.blocked_on = None
        t.entry = entry
        t.running_on = None
        t.last_core = None
        t.is_idle = False
        t.name = name or f"t{tid}"
        self.platform.register_thread_body(tid, entry)
        self.platform.trace("create", self.platform.exec_core(), to=tid,
                            prio=prio, idle=False)
        self._rq_add(tid, prio, TAIL)
        self._touch()
        self._on_ready_change(tid)
        return tid

    def _alloc_slot(self) -> int:
        for t in self.tcbs:
            if not t.alive:
                return t.tid
        raise CapacityError(f"all {len(self.tcbs)} thread slots in use")

    def _create_idle(self, core: int) -> int:
        tid = self._alloc_slot()
        t = self.tcbs[tid]
        t.state = ThreadState.READY
        t.base_priority = IDLE_PRIORITY
        t.effective_priority = IDLE_PRIORITY
        t.affinity = 1 << core
        t.entry = None
        t.running_on = None
        t.last_core = None
        t.is_idle = True
        t.name = f"idle{core}"
        self.idle_tids[core] = tid
        self.platform.trace("create", self.platform.exec_core(), to=tid,
                            prio=IDLE_PRIORITY, idle=True)
        return tid

    def start_threading(self) -> None:
        """Bring up threading: idle threads, secondary-core boot, first schedule.

        Runs on core 0.  Each secondary core receives a boot message whose
        payload stands in for the vector table, stack pointer, and entry
        function; on delivery the core enables its scheduler interrupt and
        invokes the scheduler.
        """
        self.platform.assert_critical()
        if self.started:
            raise StateError("threading already started")
        for core in range(self.num_cores):
            self._create_idle(core)
        self.started = True
        for core in range(1, self.num_cores):
            self.platform.send_boot(core, {"entry": "threading_start", "core": core})
        self.platform.enable_sched_irq(0)
        self.platform.request_schedule(0)
        self._touch()
        self._on_queue_change()  # reallocation computes its initial table here

    def yield_current(self, core: int) -> None:
        """Rotate the caller behind same-priority ready peers and reschedule."""
        self.platform.assert_critical()
        cur = self._running_app_thread(core)
        if self.config.strategy == SINGLE:
            # The running thread sits at the head of its level; rotating the
            # level puts it behind its peers.
            self._rq_advance(cur.effective_priority)
        elif self.config.strategy == REALLOC:
            # Trial tail re-entry: rebalance ranks the caller behind its
            # peers; schedule() removes it again if it keeps the core.
            self._yield_pending[core] = True
            self._rq_add(cur.tid, cur.effective_priority, TAIL)
        else:
            self._yield_pending[core] = True
        self.platform.request_schedule(core)
        self._touch()
        self._on_queue_change()

    def sleep_current(self, core: int) -> None:
        """Mark the caller Paused and reschedule its core."""
        self.platform.assert_critical()
        self.block_current(core, ThreadState.PAUSED)

    def wake(self, tid: int) -> bool:
        """Make a Paused thread Ready; returns False for non-Paused threads."""
        self.platform.assert_critical()
        t = self.tcb(tid)
        if t.state is not ThreadState.PAUSED:
            return False
        self.platform.trace("wake", self.platform.exec_core(), to=tid)
        self.platform.stage_result(tid, None)
        self._make_ready(t)
        return True

    def exit_current(self, core: int) -> None:
        """Tear down the caller; its TCB slot becomes reusable."""
        self.platform.assert_critical()
        cur = self._running_app_thread(core)
        self._deschedule_current(core, cur, ThreadState.INVALID)
        self.platform.trace("exit", core, frm=cur.tid)
        cur.entry = None
        self._touch()
        self._on_queue_change()

    def set_priority(self, tid: int, new: int) -> None:
        """Change a thread's base priority; effective priority follows
        (respecting any active inheritance) and scheduling is re-evaluated."""
        self.platform.assert_critical()
        check_priority(new)
        t = self.active_tcb(tid)
        if t.is_idle:
            raise InvalidArgumentError("cannot reprioritize an idle thread")
        t.base_priority = new
        self._touch()
        self.refresh_effective(t)
        self._on_queue_change()

    def set_affinity(self, tid: int, mask: int) -> None:
        """Replace a thread's affinity mask, evicting it from a now-forbidden core."""
        self.platform.assert_critical()
        check_affinity(mask, self.num_cores)
        t = self.active_tcb(tid)
        if t.is_idle:
            raise InvalidArgumentError("cannot re-pin an idle thread")
        t.affinity = mask
        self._touch()
        if t.state is ThreadState.RUNNING and not mask >> t.running_on & 1:
            self.platform.request_schedule(t.running_on)
        elif t.state is ThreadState.READY:
            self._on_ready_change(t.tid)
        self._on_queue_change()

    def thread_state(self, tid: int) -> ThreadState:
        return self.tcb(tid).state

    # ------------------------------------------------------------------
    # Readiness and priority bookkeeping (shared with the sync module)
    # ------------------------------------------------------------------
    def _running_app_thread(self, core: int) -> Tcb:
        tid = self.current[core]
        if tid is None:
            raise StateError(f"no thread running on core {core}")
        t = self.tcbs[tid]
        if t.is_idle:
            raise StateError(f"core {core} is running its idle thread")
        if t.state is not ThreadState.RUNNING:
            raise KernelPanic(f"current thread {tid} is {t.state}, not running")
        return t

    def _deschedule_current(self, core: int, t: Tcb, new_state: ThreadState) -> None:
        """Take the running thread off its core into new_state and reschedule."""
        if self.config.strategy == SINGLE and new_state is not ThreadState.READY:
            self._rq_del(t.tid, t.effective_priority)
        t.state = new_state
        t.running_on = None
        self.platform.request_schedule(core)

    def _make_ready(self, t: Tcb, position: str = TAIL) -> None:
        """Enqueue a thread that just became runnable and re-evaluate cores."""
        t.state = ThreadState.READY
        t.blocked_on = None
        self._rq_add(t.tid, t.effective_priority, position)
        self._touch()
        self._on_ready_change(t.tid)
        self._on_queue_change()

    def block_current(self, core: int, state: ThreadState, reason: Any = None) -> None:
        """Park the running thread in a blocked state (flags/mutex/pause)."""
        cur = self._running_app_thread(core)
        cur.blocked_on = reason
        self._deschedule_current(core, cur, state)
        self._touch()
        self._on_queue_change()

    def refresh_effective(self, t: Tcb, _visited: frozenset[int] = frozenset()) -> None:
        """Recompute effective priority from base plus mutex inheritance.

        Propagates one hop to the owner of the mutex this thread is blocked
        on, so a chain of owners converges to the stated ceiling; the
        visited set caps propagation on cyclic (deadlocked) chains.
        """
        new_eff = t.base_priority
        if self.config.priority_inheritance:
            for m in self.mutexes:
                if m.owner == t.tid and m.waiters:
                    new_eff = max(new_eff, max(self.tcbs[w].effective_priority
                                               for w in m.waiters))
        old_eff = t.effective_priority
        if new_eff == old_eff:
            # Position may still need a re-check when base passed effective,
            # but equal effective priority never moves queue entries.
            self._reevaluate_after_priority_change(t, old_eff)
            return
        t.effective_priority = new_eff
        self._touch()
        if t.state is ThreadState.READY or (
                t.state is ThreadState.RUNNING and self.config.strategy == SINGLE):
            position = HEAD if t.state is ThreadState.RUNNING else TAIL
            self._rq_del(t.tid, old_eff)
            self._rq_add(t.tid, new_eff, position)
        if (self.config.priority_inheritance
                and t.state is ThreadState.MUTEX_BLOCKED
                and t.tid not in _visited):
            owner_tid = t.blocked_on.owner if t.blocked_on is not None else None
            if owner_tid is not None:
                self.refresh_effective(self.tcbs[owner_tid], _visited | {t.tid})
        self._reevaluate_after_priority_change(t, old_eff)

    def _reevaluate_after_priority_change(self, t: Tcb, old_eff: int) -> None:
        if t.state is ThreadState.READY:
            self._on_ready_change(t.tid)
        elif t.state is ThreadState.RUNNING and t.effective_priority < old_eff:
            self._preempt_check(t.running_on)

    # ------------------------------------------------------------------
    # Scheduler-interrupt policy
    # ------------------------------------------------------------------
    def _on_ready_change(self, tid: int) -> None:
        if self.config.strategy == REALLOC:
            return  # _on_queue_change covers it via rebalance
        self.maybe_trigger_schedule(tid)

    def _on_queue_change(self) -> None:
        if self.config.strategy != REALLOC:
            return
        if not self.started:
            return
        changed = self.rebalance()
        for core in changed:
            self.platform.request_schedule(core)

    def maybe_trigger_schedule(self, changed: int) -> None:
        """Request a scheduler interrupt only where it can matter.

        Targets the affinity-permitted core running the lowest effective
        priority; no interrupt when the changed thread does not strictly
        exceed it (ties lose).
        """
        if not self.started:
            return
        t = self.tcb(changed)
        if t.state is not ThreadState.READY:
            return
        best_core: int | None = None
        best_eff = None
        for core in range(self.num_cores):
            if not t.affinity >> core & 1:
                continue
            eff = self.effective_of_core(core)
            if best_eff is None or eff < best_eff:
                best_eff, best_core = eff, core
        if best_core is not None and t.effective_priority > best_eff:
            self.platform.request_schedule(best_core)

    def _preempt_check(self, core: int) -> None:
        """Signal `core` when some Ready thread strictly outranks its current."""
        cur_eff = self.effective_of_core(core)
        for tid, prio in self.runqueue.iter_in_order():
            if prio <= cur_eff:
                break
            if self.tcbs[tid].affinity >> core & 1:
                self.platform.request_schedule(core)
                return

    def _work_conservation_recheck(self) -> None:
        """End-of-schedule sweep: signal one core if a Ready thread could
        strictly improve it.  Needed when coalesced wakeups leave more than
        one eligible thread behind a single scheduler invocation."""
        for tid, prio in self.runqueue.iter_in_order():
            t = self.tcbs[tid]
            best_core = None
            best_eff = None
            for core in range(self.num_cores):
                if not t.affinity >> core & 1:
                    continue
                eff = self.effective_of_core(core)
                if best_eff is None or eff < best_eff:
                    best_eff, best_core = eff, core
            if best_core is not None and prio > best_eff:
                self.platform.request_schedule(best_core)
                return

    # ------------------------------------------------------------------
    # The scheduler interrupt handler
    # ------------------------------------------------------------------
    def schedule(self, core: int) -> None:
        """Select and lazily dispatch the next thread for `core`."""
        self.platform.assert_critical()
        if not self.started:
            raise StateError("schedule before start_threading")
        self.stats.scheduler_invocations += 1
        self.platform.charge("scheduler_invoke")
        self.platform.trace("schedule", core)
        selected = self._strategy.select(self, core)
        yielded = self._yield_pending[core]
        self._yield_pending[core] = False
        cur_tid = self.current[core]
        if selected == cur_tid:
            # Lazy context switching: the head did not change.
            self._keep_current(core, cur_tid)
            self._strategy.post_schedule(self, core)
            return
        self._dispatch(core, selected, yielded=yielded)
        self._strategy.post_schedule(self, core)

    def _keep_current(self, core: int, cur_tid: int | None) -> None:
        """Re-selected the occupying thread: no switch, but repair state.

        The thread may have blocked and been woken again before this
        handler ran; it then sits in state Ready (and, depending on the
        strategy, in the runqueue) while still owning the core.
        """
        if cur_tid is None:
            return
        t = self.tcbs[cur_tid]
        if self.config.strategy == REALLOC and not t.is_idle:
            if self.runqueue.position(cur_tid, t.effective_priority) is not None:
                self._rq_del(cur_tid, t.effective_priority)
        if t.state is ThreadState.READY:
            t.state = ThreadState.RUNNING
            t.running_on = core
            self._touch()

    def _dispatch(self, core: int, selected: int, yielded: bool = False) -> None:
        old_tid = self.current[core]
        preempted = False
        if old_tid is not None:
            old = self.tcbs[old_tid]
            if old.state is ThreadState.RUNNING:
                preempted = not old.is_idle and not yielded
                old.state = ThreadState.READY
                old.running_on = None
                if self.config.strategy == REALLOC and not old.is_idle:
                    if not yielded:
                        self._rq_add(old_tid, old.effective_priority, HEAD)
                    self._handoff_signal(old_tid)
            else:
                old.running_on = None
        new = self.tcbs[selected]
        if new.state is ThreadState.RUNNING:
            raise KernelPanic(f"thread {selected} already running on core {new.running_on}")
        if not new.is_idle and not new.affinity >> core & 1:
            raise KernelPanic(f"thread {selected} dispatched on forbidden core {core}")
        if self.config.strategy == REALLOC and not new.is_idle:
            self._rq_del(selected, new.effective_priority)
        new.state = ThreadState.RUNNING
        new.running_on = core
        prev_core = new.last_core
        migrated = not new.is_idle and prev_core is not None and prev_core != core
        new.last_core = core
        self.current[core] = selected
        self.stats.context_switches += 1
        if preempted:
            self.stats.preemptions += 1
        self.platform.charge("context_switch")
        self.platform.trace("context_switch", core, frm=old_tid, to=selected,
                            preempted=preempted)
        if migrated:
            self.stats.migrations += 1
            self.platform.trace("migration", core, to=selected, frm=prev_core)
        if new.is_idle:
            self.platform.trace("idle_enter", core)
        self._touch()

    def _handoff_signal(self, tid: int) -> None:
        """After descheduling a still-running thread under reallocation,
        poke the core the current table assigns it to."""
        for core, assigned in enumerate(self.alloc_table):
            if assigned == tid and self.current[core] != tid:
                self.platform.request_schedule(core)

    # ------------------------------------------------------------------
    # Dynamic thread selection
    # ------------------------------------------------------------------
    def select_next_dynamic(self, core: int) -> int:
        """Pop the next eligible thread; re-add a still-runnable current first.

        A preempted thread re-enters at the head of its level so it resumes
        before same-priority peers; a voluntarily yielding one goes to the
        tail.  The returned thread is never left in the runqueue, which is
        what prevents one thread from being executed on two cores.
        """
        cur_tid = self.current[core]
        if cur_tid is not None:
            cur = self.tcbs[cur_tid]
            if cur.state is ThreadState.RUNNING and not cur.is_idle:
                position = TAIL if self._yield_pending[core] else HEAD
                self._rq_add(cur_tid, cur.effective_priority, position)
        nxt = self._rq_pop_filtered(core)
        if nxt is None:
            return self.idle_tids[core]
        return nxt

    # ------------------------------------------------------------------
    # Core reallocation
    # ------------------------------------------------------------------
    def rebalance(self) -> set[int]:
        """Recompute the core allocation table; returns cores whose cell changed.

        Runnable candidates are ranked by effective priority, with running
        threads ahead of ready peers of equal priority.  The chosen top set
        maximizes total priority subject to affinity feasibility; placement
        then minimizes cells differing from the previous table.
        """
        if self.config.strategy != REALLOC:
            raise StateError("rebalance requires the reallocation strategy")
        self.stats.rebalance_calls += 1
        if self.runqueue.mutations != getattr(self, "_last_rq_mutations", None):
            self.stats.runqueue_changes += 1
            self._last_rq_mutations = self.runqueue.mutations
        candidates = self._ranked_candidates()
        self.platform.charge("rebalance_base")
        for _ in candidates:
            self.platform.charge("rebalance_per_ready_thread")
        chosen = _greedy_feasible_set(candidates, self.num_cores,
                                      lambda tid: self.tcbs[tid].affinity)
        table = _place_minimizing_moves(chosen, self.alloc_table, self.num_cores,
                                        lambda tid: self.tcbs[tid].affinity,
                                        rank_of={tid: i for i, tid in enumerate(candidates)})
        changed = {core for core in range(self.num_cores)
                   if table[core] != self.alloc_table[core]}
        self.alloc_table = table
        return changed

    def _ranked_candidates(self) -> list[int]:
        entries = []
        for t in self.tcbs:
            if t.is_idle:
                continue
            if t.state is ThreadState.RUNNING:
                demoted = self._yield_pending[t.running_on]
                if demoted:
                    pos = self.runqueue.position(t.tid, t.effective_priority)
                    entries.append((-t.effective_priority, 1, pos, t.tid))
                else:
                    entries.append((-t.effective_priority, 0, t.running_on, t.tid))
            elif t.state is ThreadState.READY:
                pos = self.runqueue.position(t.tid, t.effective_priority)
                if pos is None:
                    raise KernelPanic(f"ready thread {t.tid} missing from runqueue")
                entries.append((-t.effective_priority, 1, pos, t.tid))
        entries.sort()
        return [tid for *_key, tid in entries]

    def _select_realloc(self, core: int) -> int:
        target = self.alloc_table[core]
        cur_tid = self.current[core]
        if target is None:
            target = self.idle_tids[core]
        if target != cur_tid:
            tt = self.tcbs[target]
            if tt.state is ThreadState.RUNNING and tt.running_on != core:
                # The assigned thread has not been released by its old core
                # yet; its deschedule there will signal us again.
                if cur_tid is not None:
                    cur = self.tcbs[cur_tid]
                    if cur.state is ThreadState.RUNNING and (
                            cur.is_idle or cur.affinity >> core & 1):
                        return cur_tid
                return self.idle_tids[core]
            if not tt.is_idle and tt.state is not ThreadState.READY:
                # Stale cell (thread blocked since the last rebalance); fall
                # back to idle and let the next change repair the table.
                return cur_tid if cur_tid is not None and \
                    self.tcbs[cur_tid].state is ThreadState.RUNNING else self.idle_tids[core]
        if target == cur_tid and cur_tid is not None:
            cur = self.tcbs[cur_tid]
            if cur.state is ThreadState.RUNNING and not cur.is_idle and \
                    not cur.affinity >> core & 1:
                # Affinity change evicted the current thread; the table is
                # stale, run idle until the next rebalance repairs it.
                return self.idle_tids[core]
        return target

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------
    def snapshot(self, event_index: int = -1) -> KernelSnapshot:
        running = tuple((core, self.current[core]) for core in range(self.num_cores))
        running_eff = tuple(max(self.effective_of_core(core), 0)
                            for core in range(self.num_cores))
        ready = tuple((t.tid, t.effective_priority, t.affinity)
                      for t in self.tcbs if t.state is ThreadState.READY and not t.is_idle)
        blocked = tuple((t.tid, t.state.value) for t in self.tcbs
                        if t.state in BLOCKED_STATES)
        return KernelSnapshot(event_index=event_index, running=running,
                              running_eff=running_eff, ready=ready, blocked=blocked)

    def blocked_dump(self, include_runnable: bool = True) -> list[dict]:
        out = []
        for t in self.tcbs:
            if t.is_idle:
                continue
            if t.state in BLOCKED_STATES:
                entry = {"tid": t.tid, "name": t.name, "state": t.state.value}
                if t.state is ThreadState.MUTEX_BLOCKED and t.blocked_on is not None:
                    entry["mutex_owner"] = t.blocked_on.owner
                if t.state is ThreadState.FLAG_BLOCKED:
                    entry["wait_mask"] = t.flags_wait_mask
                    entry["pending"] = t.flags_pending
                out.append(entry)
            elif include_runnable and t.state in (ThreadState.READY, ThreadState.RUNNING):
                # A runnable leftover at quiescence is a scheduler defect;
                # name it so the report points at the right place.
                out.append({"tid": t.tid, "name": t.name, "state": t.state.value})
        return out


# ----------------------------------------------------------------------
# Strategy objects
# ----------------------------------------------------------------------
class _SingleOptimized:
    """RIOT-style single core: the running thread stays in the runqueue and
    selection peeks the head, so no re-insertion happens on preemption."""

    name = SINGLE

    def select(self, kernel: Kernel, core: int) -> int:
        head = kernel.runqueue.peek_head()
        kernel.platform.charge("runqueue_op")
        return head if head is not None else kernel.idle_tids[core]

    def post_schedule(self, kernel: Kernel, core: int) -> None:
        kernel._work_conservation_recheck()


class _Dynamic:
    name = DYNAMIC

    def select(self, kernel: Kernel, core: int) -> int:
        return kernel.select_next_dynamic(core)

    def post_schedule(self, kernel: Kernel, core: int) -> None:
        kernel._work_conservation_recheck()


class _Reallocation:
    name = REALLOC

    def select(self, kernel: Kernel, core: int) -> int:
        return kernel._select_realloc(core)

    def post_schedule(self, kernel: Kernel, core: int) -> None:
        pass  # rebalance() after every change already covers other cores


def _make_strategy(name: str):
    return {SINGLE: _SingleOptimized, DYNAMIC: _Dynamic, REALLOC: _Reallocation}[name]()


# ----------------------------------------------------------------------
# Reallocation helpers (pure functions, exhaustive at the sizes involved)
# ----------------------------------------------------------------------
def _greedy_feasible_set(ranked: list[int], num_cores: int,
                         affinity_of: Callable[[int], int]) -> list[int]:
    """Pick the top threads (by rank) that remain jointly assignable.

    Assignability is a transversal-matroid independence test, so greedy in
    rank order maximizes total priority and prefers earlier-ranked threads
    among equals.
    """
    chosen: list[int] = []
    for tid in ranked:
        if len(chosen) == num_cores:
            break
        if _assignable(chosen + [tid], num_cores, affinity_of):
            chosen.append(tid)
    return chosen


def _assignable(tids: list[int], num_cores: int,
                affinity_of: Callable[[int], int]) -> bool:
    """Can every thread get a distinct permitted core?  (augmenting paths)"""
    core_owner: dict[int, int] = {}

    def try_place(i: int, seen: set[int]) -> bool:
        for core in range(num_cores):
            if affinity_of(tids[i]) >> core & 1 and core not in seen:
                seen.add(core)
                if core not in core_owner or try_place(core_owner[core], seen):
                    core_owner[core] = i
                    return True
        return False

    return all(try_place(i, set()) for i in range(len(tids)))


def _place_minimizing_moves(chosen: list[int], prev: list[int | None], num_cores: int,
                            affinity_of: Callable[[int], int],
                            rank_of: dict[int, int]) -> list[int | None]:
    """Assign the chosen set to cores, minimizing cells that differ from the
    previous table; ties prefer higher-ranked threads on lower core indexes."""
    big = len(rank_of) + num_cores + 1
    best_key: tuple | None = None
    best_table: list[int | None] | None = None
    table: list[int | None] = [None] * num_cores

    def recurse(core: int, remaining: frozenset[int], diffs: int, placement: tuple):
        nonlocal best_key, best_table
        if num_cores - core < len(remaining):
            return
        if core == num_cores:
            key = (diffs, placement)
            if best_key is None or key < best_key:
                best_key = key
                best_table = table.copy()
            return
        options: list[int | None] = [tid for tid in remaining
                                     if affinity_of(tid) >> core & 1]
        options.append(None)
        for tid in options:
            table[core] = tid
            d = diffs + (1 if tid != prev[core] else 0)
            p = placement + ((rank_of[tid] if tid is not None else big),)
            recurse(core + 1, remaining - {tid} if tid is not None else remaining, d, p)
        table[core] = None

    recurse(0, frozenset(chosen), 0, ())
    if best_table is None:
        raise KernelPanic("reallocation placement found no assignment")
    return best_table
