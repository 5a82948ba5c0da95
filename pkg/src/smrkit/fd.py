"""Heartbeat failure detector.

Each node beats periodically; every peer runs one timer per other node.
A timer firing marks the peer suspected and doubles that peer's timeout,
so once the network stabilizes the timeout outgrows the real delay and
false suspicions die out.  A heartbeat from a suspected peer restores it.

The detector only reacts to silence, never to message content.  Protocol
bindings with their own timeouts (view changes, elections) feed the same
suspect/restore stream instead of running this detector.
"""

from __future__ import annotations

from typing import Callable


class HeartbeatDetector:
    """State machine; the owner supplies scheduling and receives events.

    ``schedule(delay_ns, callback)`` must run the callback on the owner's
    event loop.  ``on_event(kind, peer)`` receives "suspect" / "restore".
    """

    def __init__(
        self,
        me: int,
        n: int,
        initial_timeout: int,
        schedule: Callable,
        on_event: Callable[[str, int], None],
    ):
        self.me = me
        self.peers = [p for p in range(n) if p != me]
        self.timeout = {p: initial_timeout for p in self.peers}
        self.suspected: set[int] = set()
        self._schedule = schedule
        self._on_event = on_event
        self._gen = {p: 0 for p in self.peers}
        self._started = False

    def start(self) -> None:
        self._started = True
        for p in self.peers:
            self._arm(p)

    def _arm(self, p: int) -> None:
        self._gen[p] += 1
        gen = self._gen[p]
        self._schedule(self.timeout[p], lambda: self._expire(p, gen))

    def _expire(self, p: int, gen: int) -> None:
        if gen != self._gen[p]:
            return  # a heartbeat rearmed this timer in the meantime
        if p not in self.suspected:
            self.suspected.add(p)
            self._on_event("suspect", p)
        self.timeout[p] *= 2
        self._arm(p)

    def on_heartbeat(self, p: int) -> None:
        if p == self.me or p not in self.timeout or not self._started:
            return
        if p in self.suspected:
            self.suspected.discard(p)
            self._on_event("restore", p)
        self._arm(p)
