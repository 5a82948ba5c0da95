"""Deterministic event scheduling.

Events execute in (time, insertion-sequence) order, so a run is a pure
function of (config, seed).  All randomness flows through named streams
derived from the master seed; nothing reads the wall clock.
"""

from __future__ import annotations

import hashlib
import heapq
import random


class Scheduler:
    def __init__(self):
        self._heap: list[tuple[int, int, object]] = []
        self._seq = 0
        self.now = 0

    def schedule(self, delay: int, fn) -> None:
        at = self.now + max(int(delay), 0)
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, fn))

    def run_until(self, horizon: int) -> None:
        while self._heap and self._heap[0][0] <= horizon:
            at, _, fn = heapq.heappop(self._heap)
            self.now = at
            fn()
        self.now = horizon


class RngHub:
    """Named deterministic random streams, stable across runs and machines."""

    def __init__(self, seed: int):
        self.seed = seed

    def stream(self, name: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}/{name}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))
