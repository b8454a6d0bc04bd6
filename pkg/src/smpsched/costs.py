"""Virtual-tick cost model for the simulated platform."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class CostModel:
    """Tick cost per event kind on the virtual clock.

    The defaults make simulated makespans well-defined; they are not
    calibrated to any particular hardware.
    """

    scheduler_invoke: int = 10
    context_switch: int = 30
    runqueue_op: int = 2
    rebalance_base: int = 5
    rebalance_per_ready_thread: int = 2
    ipi_delivery: int = 5
    flag_op: int = 2

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise InvalidArgumentError(f"cost {name} must be >= 0, got {value}")
