"""Syscall objects yielded by thread bodies running on the virtual platform.

A thread body is a generator function taking a :class:`ThreadCtx`; every
``yield`` of a syscall is an instrumentation point where the platform may
interleave other cores.  Kernel-call syscalls execute inside the global
critical section; ``Compute`` and ``Mark`` run locally on the core.

Example body::

    def pinger(ctx):
        for _ in range(3):
            yield SetFlags(peer_tid, 0b1)
            got = yield WaitFlags(0b1)
        yield Exit()
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from . import sync
from .errors import KernelError
from .kernel import Kernel, ThreadState, WaitMode
from .sync import PARKED, PiMutex

ANY = WaitMode.ANY
ALL = WaitMode.ALL


@dataclass
class ThreadCtx:
    """Per-thread handle passed to a body: its tid plus poll-context flag."""

    tid: int
    in_poll: bool = False


class Syscall:
    kernel_call = True

    def apply(self, kernel: Kernel, core: int) -> Any:
        raise NotImplementedError


@dataclass
class Yield(Syscall):
    def apply(self, kernel: Kernel, core: int):
        kernel.yield_current(core)


@dataclass
class Sleep(Syscall):
    def apply(self, kernel: Kernel, core: int):
        kernel.sleep_current(core)
        return PARKED


@dataclass
class Wake(Syscall):
    tid: int

    def apply(self, kernel: Kernel, core: int):
        return kernel.wake(self.tid)


@dataclass
class Exit(Syscall):
    def apply(self, kernel: Kernel, core: int):
        kernel.exit_current(core)
        return PARKED


@dataclass
class Spawn(Syscall):
    entry: Callable
    prio: int
    affinity: int | None = None
    name: str = ""

    def apply(self, kernel: Kernel, core: int):
        affinity = self.affinity
        if affinity is None:
            affinity = (1 << kernel.num_cores) - 1
        return kernel.create_thread(self.entry, self.prio, affinity, name=self.name)


@dataclass
class SetPriority(Syscall):
    tid: int
    prio: int

    def apply(self, kernel: Kernel, core: int):
        kernel.set_priority(self.tid, self.prio)


@dataclass
class SetAffinity(Syscall):
    tid: int
    mask: int

    def apply(self, kernel: Kernel, core: int):
        kernel.set_affinity(self.tid, self.mask)


@dataclass
class GetState(Syscall):
    tid: int

    def apply(self, kernel: Kernel, core: int) -> ThreadState:
        return kernel.thread_state(self.tid)


@dataclass
class SetFlags(Syscall):
    tid: int
    mask: int

    def apply(self, kernel: Kernel, core: int):
        sync.flags_set(kernel, self.tid, self.mask)


@dataclass
class WaitFlags(Syscall):
    mask: int
    mode: WaitMode = ANY

    def apply(self, kernel: Kernel, core: int):
        return sync.flags_wait(kernel, core, self.mask, self.mode)


@dataclass
class Lock(Syscall):
    mutex: PiMutex

    def apply(self, kernel: Kernel, core: int):
        return self.mutex.lock(core)


@dataclass
class Unlock(Syscall):
    mutex: PiMutex

    def apply(self, kernel: Kernel, core: int):
        self.mutex.unlock(core)


@dataclass
class BestEffort(Syscall):
    """Run another syscall, swallowing recoverable kernel errors.

    Used by fuzz scenarios whose targets may have exited concurrently.
    """

    inner: Syscall

    def apply(self, kernel: Kernel, core: int):
        try:
            return self.inner.apply(kernel, core)
        except KernelError:
            return None


@dataclass
class Compute(Syscall):
    """Local computation: advances the virtual clock by ``ticks`` and runs
    ``fn`` (if any) outside the critical section; its return value is handed
    back to the body."""

    kernel_call = False
    ticks: int = 0
    fn: Callable[[], Any] | None = None


@dataclass
class Mark(Syscall):
    """Emit an iteration-boundary trace event carrying cumulative stats."""

    kernel_call = False
    label: str = ""
