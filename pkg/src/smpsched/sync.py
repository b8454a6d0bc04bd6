"""Thread flags and a priority-inheritance mutex on kernel blocking primitives.

All operations run under the kernel's global critical section; they mutate
TCB state directly and hand staged wake-up values to the platform so a
blocked thread resumes with the right result.
"""

from __future__ import annotations

from .errors import DeadlockDetectedError, OwnershipError
from .kernel import Kernel, ThreadState, WaitMode, check_flag_mask

#: Returned by blocking operations instead of a value: the caller is no
#: longer runnable and will be resumed later with a staged result.
PARKED = type("_Parked", (), {"__repr__": lambda self: "<parked>"})()


def _match(pending: int, mask: int, mode: WaitMode) -> int | None:
    """Matched bits if the wait condition is satisfied, else None."""
    if mode is WaitMode.ANY:
        hit = pending & mask
        return hit if hit else None
    return mask if pending & mask == mask else None


def flags_set(kernel: Kernel, tid: int, mask: int) -> None:
    """OR bits into a thread's pending flags, waking it when its wait
    condition becomes satisfied (matched bits are consumed on wake)."""
    kernel.platform.assert_critical()
    check_flag_mask(mask)
    t = kernel.active_tcb(tid)
    kernel.platform.charge("flag_op")
    kernel.platform.trace("flag_set", kernel.platform.exec_core(), to=tid, mask=mask)
    t.flags_pending |= mask
    if t.state is not ThreadState.FLAG_BLOCKED:
        return
    matched = _match(t.flags_pending, t.flags_wait_mask, t.flags_wait_mode)
    if matched is None:
        return
    t.flags_pending &= ~matched
    t.flags_wait_mask = 0
    kernel.platform.stage_result(tid, matched)
    kernel._make_ready(t)


def flags_wait(kernel: Kernel, core: int, mask: int, mode: WaitMode = WaitMode.ANY):
    """Return matched bits immediately when satisfied, else block the caller.

    ANY returns the intersection with pending; ALL returns exactly ``mask``.
    Matched bits are cleared from the pending set in both paths.
    """
    kernel.platform.assert_critical()
    check_flag_mask(mask)
    cur = kernel._running_app_thread(core)
    kernel.platform.charge("flag_op")
    matched = _match(cur.flags_pending, mask, mode)
    if matched is not None:
        cur.flags_pending &= ~matched
        return matched
    cur.flags_wait_mask = mask
    cur.flags_wait_mode = mode
    kernel.block_current(core, ThreadState.FLAG_BLOCKED)
    return PARKED


class PiMutex:
    """Mutex whose owner inherits the highest waiter's effective priority.

    Waiters are kept in arrival order; unlock hands over to the highest
    effective priority, FIFO among equals.  Not recursive, no timeouts.
    """

    def __init__(self, kernel: Kernel, name: str = ""):
        self._kernel = kernel
        self.name = name or f"mutex{len(kernel.mutexes)}"
        self.owner: int | None = None
        self.waiters: list[int] = []
        kernel.mutexes.append(self)

    def __repr__(self) -> str:
        return f"<PiMutex {self.name} owner={self.owner} waiters={self.waiters}>"

    @property
    def locked(self) -> bool:
        return self.owner is not None

    def lock(self, core: int):
        """Take the mutex or block until handed over by the owner."""
        k = self._kernel
        k.platform.assert_critical()
        cur = k._running_app_thread(core)
        if self.owner == cur.tid:
            raise DeadlockDetectedError(f"thread {cur.tid} recursively locks {self.name}")
        k.platform.trace("mutex_lock", core, frm=cur.tid,
                         mutex=self.name, contended=self.owner is not None)
        if self.owner is None:
            self.owner = cur.tid
            return None
        self.waiters.append(cur.tid)
        if k.config.priority_inheritance:
            k.refresh_effective(k.tcbs[self.owner])
        k.block_current(core, ThreadState.MUTEX_BLOCKED, reason=self)
        return PARKED

    def unlock(self, core: int) -> None:
        """Release; the best waiter (if any) becomes owner and turns Ready."""
        k = self._kernel
        k.platform.assert_critical()
        cur = k._running_app_thread(core)
        if self.owner != cur.tid:
            raise OwnershipError(
                f"thread {cur.tid} unlocks {self.name} owned by {self.owner}")
        k.platform.trace("mutex_unlock", core, frm=cur.tid, mutex=self.name)
        if self.waiters:
            best_idx = 0
            for i, w in enumerate(self.waiters):
                if (k.tcbs[w].effective_priority
                        > k.tcbs[self.waiters[best_idx]].effective_priority):
                    best_idx = i
            new_owner = self.waiters.pop(best_idx)
            self.owner = new_owner
            wt = k.tcbs[new_owner]
            k.refresh_effective(wt)  # inherits from any waiters left behind
            k.platform.stage_result(new_owner, None)
            k._make_ready(wt)
        else:
            self.owner = None
        k.refresh_effective(cur)  # drop inheritance sourced from this mutex
        k._on_queue_change()
