"""Sequenced broadcast: the contract every orderer binding satisfies, a
Bracha-style byzantine reliable broadcast, and the reference construction
(reliable broadcast + per-slot consensus) used as a correctness oracle.

The sequenced-broadcast contract, for an instance with designated sender
``sigma`` over a finite slot set S:

* Integrity  -- a non-nil delivery (sn, m) with sigma correct means sigma
  cast (sn, m).
* Agreement  -- no two correct nodes deliver different values for a slot.
* Termination -- every correct node eventually delivers something for
  every slot.
* Eventual progress -- a nil delivery implies some correct node suspected
  sigma after initializing the instance.

Nil is the escape hatch: once sigma is suspected, slots it never filled
are resolved with nil so instances always terminate.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

from .domain import Batch


def echo_quorum(n: int, f: int) -> int:
    return math.ceil((n + f + 1) / 2)


class BrbBroadcast:
    """One reliable broadcast: a single sender, a single value.

    send -> echo (quorum ceil((n+f+1)/2)) -> ready (amplified at f+1,
    delivered at 2f+1).  Values travel in full in every phase; counting is
    per value digest with distinct senders.
    """

    def __init__(self, n: int, f: int, me: int, sender: int,
                 broadcast: Callable, deliver: Callable):
        self.n = n
        self.f = f
        self.me = me
        self.sender = sender
        self._broadcast = broadcast  # (phase, value) -> sends to all nodes
        self._deliver = deliver
        self._echoed = False
        self._readied = False
        self.delivered: Optional[bytes] = None
        self._echoes: dict[bytes, set[int]] = {}
        self._readies: dict[bytes, set[int]] = {}

    def cast(self, value: bytes) -> None:
        assert self.me == self.sender, "only the sender casts"
        self._broadcast("send", value)

    def handle(self, src: int, phase: str, value: bytes) -> None:
        if phase == "send":
            if src != self.sender or self._echoed:
                return
            self._echoed = True
            self._broadcast("echo", value)
        elif phase == "echo":
            peers = self._echoes.setdefault(value, set())
            peers.add(src)
            if len(peers) >= echo_quorum(self.n, self.f):
                self._send_ready(value)
        elif phase == "ready":
            peers = self._readies.setdefault(value, set())
            peers.add(src)
            if len(peers) >= self.f + 1:
                self._send_ready(value)
            if len(peers) >= 2 * self.f + 1 and self.delivered is None:
                self.delivered = value
                self._deliver(value)

    def _send_ready(self, value: bytes) -> None:
        if self._readied:
            return
        self._readied = True
        self._broadcast("ready", value)


class ConsensusPort:
    """What the reference construction needs from a per-slot consensus:
    propose at most once per node per slot; decisions arrive via the
    on_decide callback registered by the instance owner."""

    def propose(self, sn: int, value: Optional[bytes]) -> None:
        raise NotImplementedError


class HeartbeatBrbMux:
    """Heartbeats carried over reliable broadcast: one tiny broadcast
    instance per (sender, beat number), pruned as beats age out.  Costs
    O(n^2) messages per beat; the cheaper plain diffusion is the default
    transport and this one backs the oracle suite."""

    KEEP = 8  # beats retained per sender

    def __init__(self, n: int, f: int, me: int, fanout: Callable, on_beat: Callable):
        self.n = n
        self.f = f
        self.me = me
        self._fanout = fanout  # (msg_dict) -> network broadcast + local loop
        self._on_beat = on_beat  # (sender) -> None
        self._beat_no = 0
        self._instances: dict[tuple, BrbBroadcast] = {}

    def _instance(self, sender: int, beat: int) -> BrbBroadcast:
        key = (sender, beat)
        if key not in self._instances:
            def fanout(ph, v, sender=sender, beat=beat):
                self._fanout({"k": "hbbrb", "snd": sender, "beat": beat,
                              "ph": ph, "v": v, "src": self.me})

            self._instances[key] = BrbBroadcast(
                self.n, self.f, self.me, sender,
                broadcast=fanout,
                deliver=lambda v, sender=sender: self._on_beat(sender),
            )
            for k in [k for k in self._instances
                      if k[0] == sender and k[1] < beat - self.KEEP]:
                del self._instances[k]
        return self._instances[key]

    def beat(self) -> None:
        self._beat_no += 1
        self._instance(self.me, self._beat_no).cast(b"hb")

    def handle(self, src: int, msg: dict) -> None:
        self._instance(msg["snd"], msg["beat"]).handle(src, msg["ph"], msg["v"])


class ReferenceSb:
    """The oracle construction: per-slot reliable broadcast feeding per-slot
    consensus, with suspicion of the sender aborting unfilled slots to nil.

    Batches are passed opaque (canonically encoded); ``admissible`` filters
    what a byzantine sender managed to push through reliable broadcast.
    """

    def __init__(
        self,
        n: int,
        f: int,
        me: int,
        sigma: int,
        slots: tuple[int, ...],
        consensus: ConsensusPort,
        broadcast: Callable,  # (sn, phase, value) network fanout for brb
        deliver: Callable,  # (sn, Batch)
        admissible: Callable[[int, Batch], bool] = lambda sn, b: True,
    ):
        self.me = me
        self.sigma = sigma
        self.slots = slots
        self._consensus = consensus
        self._deliver = deliver
        self._admissible = admissible
        self.initialized = False
        self.aborted = False
        self._proposed: set[int] = set()
        self._delivered: set[int] = set()
        self._brb = {
            sn: BrbBroadcast(
                n, f, me, sigma,
                broadcast=(lambda ph, v, sn=sn: broadcast(sn, ph, v)),
                deliver=(lambda v, sn=sn: self._on_brb_deliver(sn, v)),
            )
            for sn in slots
        }

    def init(self, suspected_now: bool) -> None:
        assert not self.initialized, "double init"
        self.initialized = True
        if suspected_now:
            self._abort()

    def can_cast(self) -> bool:
        return self.me == self.sigma and not self.aborted

    def cast(self, sn: int, batch: Batch) -> None:
        if self.me != self.sigma:
            raise ValueError("non-sender cast rejected")
        if sn not in self._brb:
            raise ValueError(f"sn {sn} outside the instance's slot set")
        if batch.is_nil or not self._admissible(sn, batch):
            raise ValueError("inadmissible cast rejected")
        from . import codec

        self._brb[sn].cast(codec.encode(batch.encoded()))

    def on_message(self, src: int, sn: int, phase: str, value: bytes) -> None:
        brb = self._brb.get(sn)
        if brb is not None:
            brb.handle(src, phase, value)

    def on_suspect(self, p: int) -> None:
        if self.initialized and p == self.sigma:
            self._abort()

    def _abort(self) -> None:
        if self.aborted:
            return
        self.aborted = True
        for sn in self.slots:
            if sn not in self._proposed:
                self._proposed.add(sn)
                self._consensus.propose(sn, None)

    def _on_brb_deliver(self, sn: int, value: bytes) -> None:
        from . import codec

        batch = Batch.from_encoded(codec.decode(value))
        if batch.is_nil or not self._admissible(sn, batch):
            return  # byzantine sender pushed garbage; leave the slot unfilled
        if sn in self._proposed:
            return
        self._proposed.add(sn)
        self._consensus.propose(sn, value)

    def on_decide(self, sn: int, value: Optional[bytes]) -> None:
        if sn in self._delivered or sn not in self._brb:
            return
        from . import codec

        self._delivered.add(sn)
        batch = Batch.nil() if value is None else Batch.from_encoded(codec.decode(value))
        self._deliver(sn, batch)

    @property
    def done(self) -> bool:
        return len(self._delivered) == len(self.slots)
