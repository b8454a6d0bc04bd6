"""Host-runnable multicore preemptive scheduler with a virtual platform.

A tickless priority kernel (single-core optimized, dynamic thread
selection, and core reallocation strategies), thread flags, a
priority-inheritance mutex, a deterministic multicore simulator with a
host-parallel twin, an async-task bridge, and a benchmark harness.
"""

from .costs import CostModel
from .kernel import (
    DYNAMIC,
    REALLOC,
    SINGLE,
    Kernel,
    KernelConfig,
    KernelSnapshot,
    ThreadState,
    WaitMode,
)
from .platform import (
    DETERMINISTIC,
    HOST_PARALLEL,
    DeterministicPlatform,
    KernelHandle,
    quiescent_states,
    run,
)
from .runqueue import RunQueue
from .sync import PiMutex, flags_set, flags_wait
from .trace import Trace, TraceRecord

__all__ = [
    "CostModel",
    "DETERMINISTIC",
    "DYNAMIC",
    "DeterministicPlatform",
    "HOST_PARALLEL",
    "Kernel",
    "KernelConfig",
    "KernelHandle",
    "KernelSnapshot",
    "PiMutex",
    "REALLOC",
    "RunQueue",
    "SINGLE",
    "ThreadState",
    "Trace",
    "TraceRecord",
    "WaitMode",
    "flags_set",
    "flags_wait",
    "quiescent_states",
    "run",
]
