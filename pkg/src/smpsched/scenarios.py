"""Scenario library: the four benchmark workloads, the priority-inversion
scenario, and the randomized scenario generator used by the
work-conservation checker."""

from __future__ import annotations

import random
import time
from typing import Callable

import numpy as np

from . import api, matmul
from .errors import ConfigError
from .kernel import ThreadState


class Scenario:
    """A workload: creates threads at build time, optionally defines 'done'."""

    name = "scenario"
    done: Callable | None = None

    def build(self, handle) -> None:
        raise NotImplementedError


class YieldPingPong(Scenario):
    """Two equal-priority threads advancing the runqueue in a loop."""

    name = "yield"

    def __init__(self, iterations: int = 1000, prio: int = 5):
        self.iterations = iterations
        self.prio = prio

    def build(self, handle) -> None:
        def runner(marks: bool):
            def body(ctx):
                for _ in range(self.iterations):
                    if marks:
                        yield api.Mark()
                    yield api.Yield()
                if marks:
                    yield api.Mark()
                yield api.Exit()

            return body

        handle.create_thread(runner(True), self.prio, name="yield_a")
        handle.create_thread(runner(False), self.prio, name="yield_b")


class FlagsPairs(Scenario):
    """Four threads in two pairs, alternately waking each other by flags
    and suspending themselves."""

    name = "flags"

    def __init__(self, iterations: int = 1000, prio: int = 5):
        self.iterations = iterations
        self.prio = prio

    def build(self, handle) -> None:
        tids: dict[str, int] = {}

        def initiator(peer: str, marks: bool):
            def body(ctx):
                for _ in range(self.iterations):
                    if marks:
                        yield api.Mark()
                    yield api.SetFlags(tids[peer], 0b1)
                    yield api.WaitFlags(0b1)
                if marks:
                    yield api.Mark()
                yield api.Exit()

            return body

        def responder(peer: str):
            def body(ctx):
                for _ in range(self.iterations):
                    yield api.WaitFlags(0b1)
                    yield api.SetFlags(tids[peer], 0b1)
                yield api.Exit()

            return body

        tids["a1"] = handle.create_thread(initiator("b1", True), self.prio, name="pair1_a")
        tids["b1"] = handle.create_thread(responder("a1"), self.prio, name="pair1_b")
        tids["a2"] = handle.create_thread(initiator("b2", False), self.prio, name="pair2_a")
        tids["b2"] = handle.create_thread(responder("a2"), self.prio, name="pair2_b")


class PreemptFlag(Scenario):
    """A low-priority thread flags a high-priority one each iteration,
    forcing a preemption round trip."""

    name = "preempt"

    def __init__(self, iterations: int = 1000, low_prio: int = 2, high_prio: int = 5):
        self.iterations = iterations
        self.low_prio = low_prio
        self.high_prio = high_prio

    def build(self, handle) -> None:
        tids: dict[str, int] = {}

        def high(ctx):
            for _ in range(self.iterations):
                yield api.WaitFlags(0b1)
            yield api.Exit()

        def low(ctx):
            for _ in range(self.iterations):
                yield api.Mark()
                yield api.SetFlags(tids["high"], 0b1)
            yield api.Mark()
            yield api.Exit()

        tids["high"] = handle.create_thread(high, self.high_prio, name="high")
        handle.create_thread(low, self.low_prio, name="low")


class _HostPacer:
    """Sleeps after each measured iteration, proportionally to its length."""

    def __init__(self, factor: float = 1.3, floor: float = 0.0005):
        self.factor = factor
        self.floor = floor
        self._last = time.perf_counter()

    def __call__(self) -> None:
        now = time.perf_counter()
        time.sleep(max(self.floor, (now - self._last) * self.factor))
        self._last = time.perf_counter()


class MatMulSplit(Scenario):
    """One multiplication per iteration, split into row halves computed by
    two worker threads (they serialize naturally on a single core).

    Wall timing uses the start/end mark pairs, so the inter-iteration
    cool-down sits outside every measured window.
    """

    name = "matmul"

    FLAG_START = 0b01
    FLAG_DONE = 0b10

    def __init__(self, size: int, iterations: int = 1000, seed: int = 0,
                 execute: bool = True):
        if size < 2 or size % 2:
            raise ConfigError(f"matmul size {size} must be even and >= 2")
        if size > matmul.MAX_SIZE:
            raise ConfigError(f"matmul size {size} exceeds the exact-accumulator "
                              f"bound {matmul.MAX_SIZE}")
        self.size = size
        self.iterations = iterations
        self.execute = execute
        self.a, self.b = matmul.random_inputs(size, seed)
        self.out = np.empty((size, size))
        if execute:
            self.af = matmul.to_fixed(self.a)
            self.bf = matmul.to_fixed(self.b)
            matmul.warmup()

    def build(self, handle) -> None:
        size = self.size
        half = size // 2
        work_ticks = half * size * size
        tids: dict[str, int] = {}

        def top_fn():
            matmul.matmul_into(self.af[:half], self.bf, self.out[:half])

        def bottom_fn():
            matmul.matmul_into(self.af[half:], self.bf, self.out[half:])

        def main_worker(ctx):
            fn = top_fn if self.execute else None
            pace = _HostPacer() if self.execute else None
            for _ in range(self.iterations):
                yield api.Mark("start")
                yield api.SetFlags(tids["w2"], self.FLAG_START)
                yield api.Compute(ticks=work_ticks, fn=fn)
                yield api.WaitFlags(self.FLAG_DONE)
                yield api.Mark("end")
                if pace is not None:
                    # Cool-down between measured multiplications: shared
                    # hosts meter sustained multi-CPU demand, which would
                    # put the host's throttle inside the measurement.
                    yield api.Compute(ticks=0, fn=pace)
            yield api.Exit()

        def second_worker(ctx):
            fn = bottom_fn if self.execute else None
            for _ in range(self.iterations):
                yield api.WaitFlags(self.FLAG_START)
                yield api.Compute(ticks=work_ticks, fn=fn)
                yield api.SetFlags(tids["w1"], self.FLAG_DONE)
            yield api.Exit()

        # Pin each worker to its own core (both share core 0 when there is
        # only one): the halves still compute in parallel, without paying
        # for gratuitous migrations of the just-woken thread.
        pin_w1 = 0b01
        pin_w2 = 0b10 if handle.num_cores >= 2 else 0b01
        tids["w1"] = handle.create_thread(main_worker, 5, affinity=pin_w1,
                                          name="mm_main")
        tids["w2"] = handle.create_thread(second_worker, 5, affinity=pin_w2,
                                          name="mm_second")

    def expected(self) -> np.ndarray:
        return matmul.python_matmul(self.a, self.b)


class PriorityInversion(Scenario):
    """Classic three-thread inversion: H blocks on a mutex held by L while
    M is ready; inheritance decides whether H or M finishes first."""

    name = "inversion"

    def __init__(self):
        self.completion_order: list[str] = []

    def build(self, handle) -> None:
        m = handle.new_mutex("m")
        tids: dict[str, int] = {}
        order = self.completion_order

        def low(ctx):
            yield api.Lock(m)
            yield api.SetFlags(tids["high"], 0b1)
            yield api.SetFlags(tids["mid"], 0b1)
            yield api.Compute(ticks=50)
            yield api.Unlock(m)
            order.append("low")
            yield api.Mark("low_done")
            yield api.Exit()

        def high(ctx):
            yield api.WaitFlags(0b1)
            yield api.Lock(m)
            yield api.Compute(ticks=10)
            yield api.Unlock(m)
            order.append("high")
            yield api.Mark("high_done")
            yield api.Exit()

        def mid(ctx):
            yield api.WaitFlags(0b1)
            yield api.Compute(ticks=30)
            order.append("mid")
            yield api.Mark("mid_done")
            yield api.Exit()

        tids["high"] = handle.create_thread(high, 5, name="high")
        tids["mid"] = handle.create_thread(mid, 3, name="mid")
        tids["low"] = handle.create_thread(low, 1, name="low")


class Startup(Scenario):
    """Minimal scenario for inspecting the boot/startup trace."""

    name = "startup"

    def __init__(self, app_threads: int = 1):
        self.app_threads = app_threads

    def build(self, handle) -> None:
        def body(ctx):
            yield api.Compute(ticks=5)
            yield api.Exit()

        for i in range(self.app_threads):
            handle.create_thread(body, 5, name=f"app{i}")


# ----------------------------------------------------------------------
# Randomized scenarios for the work-conservation checker
# ----------------------------------------------------------------------
class FuzzScenario(Scenario):
    """Random threads with random priorities, affinities, and event mixes.

    Construction guarantees termination: flag waits only consume bits that
    a lower-indexed thread promises to set before exiting, and every sleep
    has a matching retry-wake task handled by a lowest-priority janitor
    thread that itself never blocks.
    """

    name = "fuzz"

    def __init__(self, seed: int, num_cores: int, max_threads: int = 10):
        rng = random.Random(seed)
        self.num_cores = num_cores
        self.seed = seed
        n = rng.randint(2, max_threads)
        self.priorities = [rng.randint(2, 31) for _ in range(n)]
        self.affinities = [rng.randrange(1, 1 << num_cores) for _ in range(n)]
        # Promise table: waiter i <- list of (setter j < i, unique bit).
        promises: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for i in range(1, n):
            free_bits = list(range(16))
            rng.shuffle(free_bits)
            for _ in range(rng.randint(0, 3)):
                if not free_bits:
                    break
                promises[i].append((rng.randrange(i), free_bits.pop()))
        self.scripts: list[list[tuple]] = []
        sleep_counts = [0] * n
        obligations: list[list[tuple]] = [[] for _ in range(n)]
        for i, plist in enumerate(promises):
            for setter, bit in plist:
                obligations[setter].append(("set_flags", i, 1 << bit))
        for i in range(n):
            script: list[tuple] = []
            unused = [bit for _, bit in promises[i]]
            for _ in range(rng.randint(2, 6)):
                kind = rng.choice(("work", "yield", "set_priority", "set_affinity",
                                   "wake", "sleep", "wait", "wait"))
                if kind == "work":
                    script.append(("work", rng.randint(1, 20)))
                elif kind == "yield":
                    script.append(("yield",))
                elif kind == "set_priority":
                    script.append(("set_priority", rng.randrange(n), rng.randint(2, 31)))
                elif kind == "set_affinity":
                    script.append(("set_affinity", rng.randrange(n),
                                   rng.randrange(1, 1 << num_cores)))
                elif kind == "wake":
                    script.append(("wake", rng.randrange(n)))
                elif kind == "sleep":
                    script.append(("sleep",))
                    sleep_counts[i] += 1
                elif kind == "wait" and unused:
                    if len(unused) >= 2 and rng.random() < 0.3:
                        bits = (1 << unused.pop()) | (1 << unused.pop())
                        script.append(("wait_flags", bits, "all"))
                    else:
                        script.append(("wait_flags", 1 << unused.pop(), "any"))
            for ob in obligations[i]:
                script.insert(rng.randint(0, len(script)), ob)
            self.scripts.append(script)
        self.sleep_counts = sleep_counts
        self.needs_janitor = any(sleep_counts)

    def build(self, handle) -> None:
        tids: list[int] = []

        def make_body(script):
            def body(ctx):
                for action in script:
                    kind = action[0]
                    if kind == "work":
                        yield api.Compute(ticks=action[1])
                    elif kind == "yield":
                        yield api.Yield()
                    elif kind == "set_flags":
                        yield api.BestEffort(api.SetFlags(tids[action[1]], action[2]))
                    elif kind == "wait_flags":
                        mode = api.ALL if action[2] == "all" else api.ANY
                        yield api.WaitFlags(action[1], mode)
                    elif kind == "set_priority":
                        yield api.BestEffort(api.SetPriority(tids[action[1]], action[2]))
                    elif kind == "set_affinity":
                        yield api.BestEffort(api.SetAffinity(tids[action[1]], action[2]))
                    elif kind == "wake":
                        yield api.Wake(tids[action[1]])
                    elif kind == "sleep":
                        yield api.Sleep()
                yield api.Exit()

            return body

        for i, script in enumerate(self.scripts):
            tids.append(handle.create_thread(make_body(script), self.priorities[i],
                                             self.affinities[i], name=f"f{i}"))

        if self.needs_janitor:
            counts = dict(enumerate(self.sleep_counts))

            def janitor(ctx):
                while any(v > 0 for v in counts.values()):
                    for idx in list(counts):
                        if counts[idx] <= 0:
                            continue
                        state = yield api.GetState(tids[idx])
                        if state is ThreadState.INVALID:
                            counts[idx] = 0
                            continue
                        woke = yield api.Wake(tids[idx])
                        if woke:
                            counts[idx] -= 1
                    yield api.Yield()
                yield api.Exit()

            handle.create_thread(janitor, 1, name="janitor")


NAMED_SCENARIOS = {
    "yield": lambda iterations=1000, seed=0: YieldPingPong(iterations),
    "flags": lambda iterations=1000, seed=0: FlagsPairs(iterations),
    "preempt": lambda iterations=1000, seed=0: PreemptFlag(iterations),
    "matmul": lambda iterations=1000, seed=0: MatMulSplit(40, iterations, seed),
    "inversion": lambda iterations=1000, seed=0: PriorityInversion(),
    "startup": lambda iterations=1000, seed=0: Startup(),
}
