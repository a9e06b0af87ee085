"""Deterministic discrete-event engine.

Time is an integer count of nanoseconds.  Events live in a binary heap keyed on
``(fire_at, counter)`` so that ties are dispatched in insertion order.
Cancellation is lazy: a cancelled entry stays in the heap with its callback
cleared and is skipped when popped.
"""

from __future__ import annotations

import hashlib
import heapq
from typing import Any, Callable

import numpy as np

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000
NS_PER_US = 1_000


def seconds(t: float) -> int:
    return int(round(t * NS_PER_S))


def ms(t: float) -> int:
    return int(round(t * NS_PER_MS))


def us(t: float) -> int:
    return int(round(t * NS_PER_US))


def to_seconds(t: int) -> float:
    return t / NS_PER_S


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


class RandomStreams:
    """Independent uniform streams derived from one master seed.

    Each stream is a PCG64 generator seeded from ``SeedSequence(seed,
    spawn_key=(h,))`` where ``h`` is a stable 32-bit digest of the stream name,
    so adding a consumer never perturbs another consumer's sequence.  Draws are
    buffered in blocks because single-value numpy calls dominate otherwise.
    """

    BLOCK = 4096

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gens: dict[str, np.random.Generator] = {}
        self._buf: dict[str, list[float]] = {}

    @staticmethod
    def _key(name: str) -> int:
        return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")

    def register(self, name: str) -> None:
        if name in self._gens:
            return
        ss = np.random.SeedSequence(self.seed, spawn_key=(self._key(name),))
        self._gens[name] = np.random.Generator(np.random.PCG64(ss))
        self._buf[name] = []

    def registered(self, name: str) -> bool:
        return name in self._gens

    def uniform(self, name: str) -> float:
        try:
            buf = self._buf[name]
        except KeyError:
            raise KeyError(f"random stream {name!r} is not registered") from None
        if not buf:
            # reversed so pop() yields draws in generation order
            buf.extend(self._gens[name].random(self.BLOCK)[::-1].tolist())
        return buf.pop()

    def stream(self, name: str) -> Callable[[], float]:
        """Register ``name`` and return a zero-argument draw function."""
        self.register(name)
        buf = self._buf[name]
        gen = self._gens[name]
        block = self.BLOCK

        def draw() -> float:
            if not buf:
                buf.extend(gen.random(block)[::-1].tolist())
            return buf.pop()

        return draw


class Simulator:
    """Virtual clock plus event heap.

    ``schedule`` returns the heap entry itself; pass it to ``cancel``.
    """

    def __init__(self, seed: int = 0):
        self.now = 0
        self._heap: list[list[Any]] = []
        self._counter = 0
        self.dispatched = 0
        self.rng = RandomStreams(seed)

    def schedule(self, fire_at: int, action: Callable[..., Any], *args: Any) -> list:
        if fire_at < self.now:
            raise SchedulingError(
                f"event scheduled at {fire_at} ns but clock is already {self.now} ns"
            )
        self._counter += 1
        entry = [fire_at, self._counter, action, args]
        heapq.heappush(self._heap, entry)
        return entry

    def schedule_in(self, delay: int, action: Callable[..., Any], *args: Any) -> list:
        return self.schedule(self.now + delay, action, *args)

    @staticmethod
    def cancel(handle: list) -> None:
        handle[2] = None

    def pending(self) -> int:
        return sum(1 for e in self._heap if e[2] is not None)

    def run_until(self, end: int) -> int:
        heap = self._heap
        pop = heapq.heappop
        count = 0
        while heap and heap[0][0] <= end:
            entry = pop(heap)
            action = entry[2]
            if action is None:
                continue
            entry[2] = None
            self.now = entry[0]
            action(*entry[3])
            count += 1
        self.dispatched += count
        if end > self.now:
            self.now = end
        return self.now

    def uniform(self, stream: str) -> float:
        return self.rng.uniform(stream)
