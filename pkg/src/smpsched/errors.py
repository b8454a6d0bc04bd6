"""Exception hierarchy shared by the kernel, platform, and harness."""

from __future__ import annotations


class SmpschedError(Exception):
    """Base class for all errors raised by this package."""


class KernelError(SmpschedError):
    """Recoverable kernel-facing error (bad argument, capacity, not found)."""


class CapacityError(KernelError):
    """A fixed-capacity structure (TCB table, runqueue) is full."""


class NotFoundError(KernelError):
    """Referenced thread/queue entry does not exist where claimed."""


class InvalidArgumentError(KernelError):
    """Argument outside its legal domain (zero affinity, bad priority)."""


class StateError(KernelError):
    """Operation called in a state that forbids it (double start, bad exit)."""


class OwnershipError(KernelError):
    """Mutex unlock attempted by a thread that does not own it."""


class DeadlockDetectedError(KernelError):
    """Immediate self-deadlock, e.g. recursive lock of a non-recursive mutex."""


class ContractViolationError(SmpschedError):
    """API misuse that the platform can detect, e.g. block_on inside a poll."""


class ConfigError(SmpschedError):
    """Inconsistent kernel/benchmark configuration."""


class KernelPanic(SmpschedError):
    """Invariant violation inside the kernel: a defect, never recoverable."""


class SimulationDeadlockError(SmpschedError):
    """Scenario reached quiescence with blocked non-idle threads left over.

    Carries a dump of the blocked threads so tests and the CLI can report
    which threads were stuck and why.
    """

    def __init__(self, blocked: list[dict], message: str | None = None):
        self.blocked = blocked
        names = ", ".join(f"t{entry['tid']}({entry['state']})" for entry in blocked)
        super().__init__(message or f"deadlock: blocked threads: {names}")
