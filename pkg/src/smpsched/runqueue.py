"""Fixed-capacity priority runqueue: one FIFO list per level plus a bitcache.

Higher numeric priority value means higher priority.  Level 0 is reserved
for idle threads; application threads live in levels 1..=31.  The bitcache
keeps one bit per nonempty level so the highest nonempty level is found in
O(1) via ``int.bit_length``.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterator

from .errors import CapacityError, InvalidArgumentError, NotFoundError, KernelPanic

NUM_LEVELS = 32
IDLE_PRIORITY = 0
MIN_APP_PRIORITY = 1
MAX_APP_PRIORITY = NUM_LEVELS - 1

HEAD = "head"
TAIL = "tail"


def check_priority(prio: int, *, allow_idle: bool = False) -> int:
    """Validate a priority level and return it."""
    lo = IDLE_PRIORITY if allow_idle else MIN_APP_PRIORITY
    if not isinstance(prio, int) or not lo <= prio <= MAX_APP_PRIORITY:
        raise InvalidArgumentError(f"priority {prio!r} outside {lo}..{MAX_APP_PRIORITY}")
    return prio


class RunQueue:
    """Ready-thread queue with per-priority FIFO order and O(1) head lookup."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidArgumentError(f"capacity {capacity} < 1")
        self.capacity = capacity
        self._levels: list[deque[int]] = [deque() for _ in range(NUM_LEVELS)]
        self._bitcache = 0
        self._count = 0
        # Mutation bookkeeping consumed by the kernel's strategies and stats.
        self.insertions = 0
        self.mutations = 0

    def __len__(self) -> int:
        return self._count

    def __contains__(self, tid: int) -> bool:
        return any(tid in lvl for lvl in self._levels)

    @property
    def bitcache(self) -> int:
        return self._bitcache

    def add(self, tid: int, prio: int, position: str = TAIL) -> None:
        """Enqueue ``tid`` at the head or tail of its priority level.

        Duplicate enqueue is a kernel defect and raises ``KernelPanic``;
        a full queue raises ``CapacityError``.
        """
        check_priority(prio, allow_idle=True)
        if position not in (HEAD, TAIL):
            raise InvalidArgumentError(f"position {position!r}")
        if self._count >= self.capacity:
            raise CapacityError(f"runqueue full (capacity {self.capacity})")
        if tid in self:
            raise KernelPanic(f"thread {tid} enqueued twice")
        level = self._levels[prio]
        if position == HEAD:
            level.appendleft(tid)
        else:
            level.append(tid)
        self._bitcache |= 1 << prio
        self._count += 1
        self.insertions += 1
        self.mutations += 1

    def delete(self, tid: int, prio: int) -> None:
        """Remove ``tid`` from level ``prio``; clears the bit if it empties."""
        check_priority(prio, allow_idle=True)
        level = self._levels[prio]
        try:
            level.remove(tid)
        except ValueError:
            raise NotFoundError(f"thread {tid} not queued at priority {prio}") from None
        if not level:
            self._bitcache &= ~(1 << prio)
        self._count -= 1
        self.mutations += 1

    def peek_head(self) -> int | None:
        """Front of the highest nonempty level, or None when empty."""
        if self._bitcache == 0:
            return None
        return self._levels[self._bitcache.bit_length() - 1][0]

    def pop_head_filtered(self, core: int, affinity_of: Callable[[int], int]) -> int | None:
        """Pop the first thread (levels high to low, FIFO within a level)
        whose affinity mask permits ``core``; ineligible threads stay queued.
        """
        bits = self._bitcache
        while bits:
            prio = bits.bit_length() - 1
            level = self._levels[prio]
            for idx, tid in enumerate(level):
                if affinity_of(tid) >> core & 1:
                    del level[idx]
                    if not level:
                        self._bitcache &= ~(1 << prio)
                    self._count -= 1
                    self.mutations += 1
                    return tid
            bits &= ~(1 << prio)
        return None

    def advance(self, prio: int) -> None:
        """Rotate the front of level ``prio`` to its tail (round-robin)."""
        check_priority(prio, allow_idle=True)
        level = self._levels[prio]
        if not level:
            raise NotFoundError(f"no threads queued at priority {prio}")
        level.rotate(-1)
        self.mutations += 1

    def position(self, tid: int, prio: int) -> int | None:
        """FIFO index of ``tid`` within its level, or None if absent."""
        try:
            return self._levels[prio].index(tid)
        except ValueError:
            return None

    def level_snapshot(self, prio: int) -> tuple[int, ...]:
        return tuple(self._levels[prio])

    def iter_in_order(self) -> Iterator[tuple[int, int]]:
        """Yield (tid, prio) pairs in scheduling order (high prio first)."""
        for prio in range(NUM_LEVELS - 1, -1, -1):
            for tid in self._levels[prio]:
                yield tid, prio

    def check_consistency(self) -> None:
        """Assert the bitcache matches the level lists (test support)."""
        for prio, level in enumerate(self._levels):
            bit = self._bitcache >> prio & 1
            if bool(level) != bool(bit):
                raise KernelPanic(f"bitcache bit {prio} inconsistent")
        if sum(len(lvl) for lvl in self._levels) != self._count:
            raise KernelPanic("runqueue count inconsistent")
