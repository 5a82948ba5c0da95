"""Ideal per-slot consensus used by the reference broadcast binding.

A simulator-global oracle: it sees every node's proposal for a slot and,
once all statically-correct nodes have proposed, decides the value proposed
by the lowest-id correct node (which is the common value whenever the
correct proposals agree).  Decisions are scheduled back to each live node
with a network-like delay; a blocked node's delivery retries until its
partition heals.  Test oracle only; never part of a deployable path.
"""

from __future__ import annotations

from typing import Optional


class IdealAdjudicator:
    def __init__(self, sched, network, correct: set[int], mean_delay: int):
        self.sched = sched
        self.network = network
        self.correct = sorted(correct)
        self.mean_delay = mean_delay
        self.nodes: dict[int, object] = {}  # node -> decide callback
        self.proposals: dict[tuple, dict[int, Optional[bytes]]] = {}
        self.decided: dict[tuple, Optional[bytes]] = {}
        self.delivered: set[tuple] = set()
        self.registered: dict[str, tuple] = {}

    def attach(self, node: int, on_decide) -> None:
        self.nodes[node] = on_decide

    def register(self, inst: str, sns) -> None:
        self.registered.setdefault(inst, tuple(sns))

    def propose(self, inst: str, sn: int, value: Optional[bytes], node: int) -> None:
        key = (inst, sn)
        if key in self.decided:
            self._ship(key, node)
            return
        slot = self.proposals.setdefault(key, {})
        slot.setdefault(node, value)
        if all(p in slot for p in self.correct):
            self.decided[key] = slot[self.correct[0]]
            for target in sorted(self.nodes):
                self._ship(key, target)

    def _ship(self, key: tuple, node: int) -> None:
        if (key, node) in self.delivered:
            return
        self.delivered.add((key, node))
        self._deliver_later(key, node, self.mean_delay)

    def _deliver_later(self, key: tuple, node: int, delay: int) -> None:
        def attempt():
            addr = ("n", node)
            if addr in self.network.crashed:
                return
            if self.network._blocked(addr, self.sched.now):
                self._deliver_later(key, node, self.mean_delay)
                return
            inst, sn = key
            self.nodes[node](inst, sn, self.decided[key])

        self.sched.schedule(delay, attempt)
