"""Partially synchronous network model.

Before the stabilization time, delays are heavy-tailed (messages reorder
freely) but nothing is ever dropped.  Afterwards every delivery between
live, unpartitioned endpoints lands within the bound delta = meanDelay.
An optional per-node egress rate serializes transmissions, which is what
exposes single-leader bandwidth bottlenecks without real sockets.

Partition windows drop traffic to and from the target while open; crashes
silence a node permanently.
"""

from __future__ import annotations

from .. import codec

Address = tuple[str, int]  # ("n", node) or ("c", client)


class Network:
    def __init__(self, sched, rng, mean_delay: int, gst: int, bandwidth: int = 0):
        self.sched = sched
        self.rng = rng
        self.mean_delay = mean_delay
        self.gst = gst
        self.bandwidth = bandwidth  # bytes per second of node egress; 0 = uncapped
        self.handlers: dict[Address, object] = {}
        self.crashed: set[Address] = set()
        self.partitions: dict[Address, tuple[int, int]] = {}
        self._egress_free: dict[Address, int] = {}

    def register(self, addr: Address, handler) -> None:
        self.handlers[addr] = handler

    def crash(self, addr: Address) -> None:
        self.crashed.add(addr)

    def partition(self, addr: Address, start: int, end: int) -> None:
        self.partitions[addr] = (start, end)

    def _blocked(self, addr: Address, t: int) -> bool:
        window = self.partitions.get(addr)
        return window is not None and window[0] <= t < window[1]

    def _delay(self, at: int) -> int:
        if at < self.gst:
            heavy = self.rng.paretovariate(2.0) * self.rng.uniform(0.3, 1.2)
            return int(self.mean_delay * min(heavy, 12.0))
        return int(self.mean_delay * self.rng.uniform(0.5, 1.0))

    def send(self, src: Address, dst: Address, msg: dict) -> None:
        now = self.sched.now
        if src in self.crashed:
            return
        if self._blocked(src, now) or self._blocked(dst, now):
            return
        depart = now
        if self.bandwidth and src[0] == "n":
            size = len(codec.encode(msg))
            free = max(self._egress_free.get(src, 0), now)
            depart = free + int(size * 1_000_000_000 / self.bandwidth)
            self._egress_free[src] = depart
        arrive = depart + self._delay(depart)
        if self._blocked(dst, arrive):
            return
        self.sched.schedule(arrive - now, lambda: self._deliver(src, dst, msg))

    def _deliver(self, src: Address, dst: Address, msg: dict) -> None:
        if dst in self.crashed:
            return
        handler = self.handlers.get(dst)
        if handler is not None:
            handler(src, msg)
