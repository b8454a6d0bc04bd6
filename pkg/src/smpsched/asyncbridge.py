"""Cooperative task executor hosted inside a scheduled thread.

Tasks are poll-able units: ``step(waker) -> PENDING | Ready(value)``.  When
every task is pending and no wake is queued, the owning thread suspends
itself; wakers funnel through the kernel's wake under the critical section,
so they are safe to fire from any core.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

from .api import Sleep, Syscall, ThreadCtx
from .errors import ContractViolationError
from .kernel import Kernel
from .sync import PARKED

#: Poll result: not finished yet, will be woken via the waker.
PENDING = type("_Pending", (), {"__repr__": lambda self: "<pending>"})()


@dataclass(frozen=True)
class Ready:
    """Poll result carrying the task's final value."""

    value: Any = None


class Task(Protocol):
    def step(self, waker) -> Any: ...


@dataclass
class ExecutorWaker:
    """Wake handle for one executor slot; hand it to external code."""

    executor: "Executor"
    task_index: int
    notifies: int = 0


@dataclass
class BlockOnWaker:
    """Wake handle for a thread blocked directly on one task."""

    owner_tid: int
    notified: bool = False
    notifies: int = 0


class Executor:
    """Task slots plus a wake queue, owned by one thread."""

    def __init__(self, tasks: list[Task]):
        self.tasks = list(tasks)
        self.owner: int | None = None
        self.inbox: list[int] = []
        self.waiting = False
        self.poll_counts = [0] * len(self.tasks)
        self.results: dict[int, Any] = {}
        self.wakers = [ExecutorWaker(self, i) for i in range(len(self.tasks))]

    def live_tasks(self) -> list[int]:
        return [i for i in range(len(self.tasks)) if i not in self.results]

    def all_done(self) -> bool:
        return len(self.results) == len(self.tasks)

    def drain(self) -> list[int]:
        woken, self.inbox = self.inbox, []
        return woken

    def poll(self, index: int, ctx: ThreadCtx) -> None:
        if index in self.results:
            return  # after Ready a task is never stepped again
        self.poll_counts[index] += 1
        ctx.in_poll = True
        try:
            res = self.tasks[index].step(self.wakers[index])
        finally:
            ctx.in_poll = False
        if isinstance(res, Ready):
            self.results[index] = res.value


def executor_body(executor: Executor):
    """Thread body running the executor; it never returns.

    Polls every task once, then only wake-targeted tasks; suspends the
    thread whenever all tasks are pending and no wakes are queued.
    """

    def body(ctx: ThreadCtx):
        executor.owner = ctx.tid
        to_poll = executor.live_tasks()
        while True:
            for index in to_poll:
                executor.poll(index, ctx)
            if executor.all_done():
                break
            to_poll = (yield ExecutorWait(executor)) or []
        while True:  # all results collected; stay suspended
            yield Sleep()

    return body


def block_on(ctx: ThreadCtx, task: Task):
    """Drive one task to completion from a running thread (``yield from``).

    Polls; on Pending, suspends the calling thread until the waker fires,
    then polls again; returns the Ready value.
    """
    if ctx.in_poll:
        raise ContractViolationError("block_on called from inside an executor poll")
    waker = BlockOnWaker(ctx.tid)
    while True:
        res = task.step(waker)
        if isinstance(res, Ready):
            return res.value
        yield BlockOnWait(waker)


# ----------------------------------------------------------------------
# Kernel-side syscalls (executed under the global critical section)
# ----------------------------------------------------------------------
@dataclass
class Notify(Syscall):
    """Deliver a waker: queue the wake and rouse the owning thread."""

    waker: ExecutorWaker | BlockOnWaker

    def apply(self, kernel: Kernel, core: int):
        w = self.waker
        w.notifies += 1
        if isinstance(w, BlockOnWaker):
            w.notified = True
            kernel.wake(w.owner_tid)
            return None
        ex = w.executor
        ex.inbox.append(w.task_index)
        if ex.waiting and ex.owner is not None:
            ex.waiting = False
            if kernel.wake(ex.owner):
                kernel.platform.stage_result(ex.owner, ex.drain())
        return None


@dataclass
class ExecutorWait(Syscall):
    """Fetch queued wakes, suspending the executor thread when none exist."""

    executor: Executor

    def apply(self, kernel: Kernel, core: int):
        ex = self.executor
        ex.waiting = False  # spurious wakes leave the flag stale
        if ex.inbox:
            return ex.drain()
        ex.waiting = True
        kernel.sleep_current(core)
        return PARKED


@dataclass
class BlockOnWait(Syscall):
    """Suspend until the block_on waker has fired (checked atomically)."""

    waker: BlockOnWaker

    def apply(self, kernel: Kernel, core: int):
        if self.waker.notified:
            self.waker.notified = False
            return None
        kernel.sleep_current(core)
        return PARKED
