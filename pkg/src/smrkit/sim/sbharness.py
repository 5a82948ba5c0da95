"""Standalone driver for a single sequenced-broadcast instance, used to
check the broadcast contract on every binding in isolation (no epochs, no
clients, no log): the designated sender casts a scripted series of batches
while delays, stabilization time, and an optional crash vary with the seed.

Bindings:
  reference-ideal -- reliable broadcast + the ideal per-slot adjudicator
  reference-pbft  -- reliable broadcast + one single-slot three-phase
                     instance per slot acting as the consensus layer
  pbft            -- the three-phase orderer bound to the segment directly
  raft            -- the replicated-log orderer (crash faults only)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from .. import codec
from ..crypto import client_identity, make_authenticator
from ..domain import Batch, Request, RequestId, Segment, request_signing_payload
from ..fd import HeartbeatDetector
from ..pbft import PbftInstance, verify_message
from ..raft import RaftInstance
from ..sb import HeartbeatBrbMux, ReferenceSb
from ..trace import Tracer
from .adjudicator import IdealAdjudicator
from .core import RngHub, Scheduler
from .network import Network

BINDINGS = ("reference-ideal", "reference-pbft", "pbft", "raft")


@dataclass
class SbScenario:
    binding: str
    n: int = 4
    f: int = 1
    sigma: int = 0
    num_slots: int = 4
    cast_interval: int = 300_000_000
    mean_delay: int = 50_000_000
    gst: int = 1_500_000_000
    horizon: int = 12_000_000_000
    timeout_base: int = 2_500_000_000
    crash: Optional[tuple[int, int]] = None  # (node, time)

    @property
    def margin(self) -> int:
        return 4 * self.timeout_base


class _SbNode:
    """Minimal host: one instance (plus its failure detector where the
    binding needs one) wired straight to the network."""

    def __init__(self, me: int, scen: SbScenario, auth, sched, net, tracer,
                 hub: RngHub, adjudicator):
        self.me = me
        self.scen = scen
        self.auth = auth
        self.sched = sched
        self.net = net
        self.tracer = tracer
        self.crashed = False
        self.addr = ("n", me)
        self.rng = hub.stream(f"sbnode/{me}")
        self.seg = Segment(
            epoch=0, leader=scen.sigma, index=0,
            seq_nrs=tuple(range(scen.num_slots)), buckets=frozenset(),
        )
        self.detector: Optional[HeartbeatDetector] = None
        self.hb_mux: Optional[HeartbeatBrbMux] = None
        self.brb_seen: dict[int, bytes] = {}
        self.bc_insts: dict[int, PbftInstance] = {}
        self.instance = self._build(adjudicator)
        net.register(self.addr, self.on_net)

    # host surface for instances ------------------------------------------------

    def now(self):
        return self.sched.now

    def schedule(self, delay, cb):
        def guarded():
            if not self.crashed:
                cb()

        self.sched.schedule(delay, guarded)

    def send(self, dst, msg):
        if not self.crashed:
            self.net.send(self.addr, ("n", dst), msg)

    def broadcast(self, msg):
        for p in range(self.scen.n):
            if p != self.me:
                self.send(p, msg)

    def announce(self, sn, batch):
        self.deliver(sn, batch)

    def suspect(self, p):
        self.tracer.emit("sus", nd=self.me, p=p, src=self.seg.instance)

    def trace(self, kind, **fields):
        self.tracer.emit(kind, nd=self.me, **fields)

    def deliver(self, sn, batch: Batch):
        self.tracer.emit("dlv", nd=self.me, inst=self.seg.instance, sn=sn,
                         d=batch.digest(), nil=batch.is_nil)

    # construction ---------------------------------------------------------------

    def _build(self, adjudicator):
        scen = self.scen
        if scen.binding == "pbft":
            inst = PbftInstance(
                self.seg, scen.n, scen.f, self.me, self.auth, self,
                validator=lambda b, sn, v: ("ok",),
                timeout_base=scen.timeout_base,
            )
            inst.start()
            self.tracer.emit("init", nd=self.me, inst=self.seg.instance,
                             sigma=scen.sigma, sns=list(self.seg.seq_nrs))
            return inst
        if scen.binding == "raft":
            inst = RaftInstance(
                self.seg, scen.n, self.me, self,
                election_range=(2 * scen.mean_delay, 4 * scen.mean_delay),
                heartbeat_period=max(scen.mean_delay // 2, 1),
            )
            inst.start()
            self.tracer.emit("init", nd=self.me, inst=self.seg.instance,
                             sigma=scen.sigma, sns=list(self.seg.seq_nrs))
            return inst
        # reference bindings share the reliable-broadcast front end
        self.detector = HeartbeatDetector(
            self.me, scen.n, 4 * scen.mean_delay, self.schedule, self._fd_event,
        )
        if scen.binding == "reference-ideal":
            me = self.me

            class _Port:
                def propose(_self, sn, value):
                    adjudicator.propose(self.seg.instance, sn, value, me)

            port = _Port()
            adjudicator.register(self.seg.instance, self.seg.seq_nrs)
            adjudicator.attach(self.me, lambda inst, sn, v: self.instance.on_decide(sn, v))
        else:  # reference-pbft: one single-slot instance per sequence number
            node = self

            class _Port:
                def propose(_self, sn, value):
                    node._bc_propose(sn, value)

            port = _Port()
            for sn in self.seg.seq_nrs:
                self.bc_insts[sn] = self._make_bc_instance(sn)
        instance = ReferenceSb(
            scen.n, scen.f, self.me, scen.sigma, self.seg.seq_nrs,
            consensus=port,
            broadcast=self._brb_fanout,
            deliver=self.deliver,
        )
        instance.init(suspected_now=False)
        self.tracer.emit("init", nd=self.me, inst=self.seg.instance,
                         sigma=scen.sigma, sns=list(self.seg.seq_nrs))
        self.detector.start()
        self._heartbeat_loop()
        return instance

    def _make_bc_instance(self, sn: int) -> PbftInstance:
        # one consensus group per slot; the epoch field doubles as the slot
        # tag so the instances get distinct message streams
        seg = Segment(epoch=sn, leader=self.scen.sigma, index=0,
                      seq_nrs=(sn,), buckets=frozenset())
        host = self

        class _BcServices:
            def broadcast(_self, msg):
                host.broadcast(msg)

            def send(_self, dst, msg):
                host.send(dst, msg)

            def schedule(_self, delay, cb):
                host.schedule(delay, cb)

            def now(_self):
                return host.now()

            def announce(_self, sn_, batch):
                value = None if batch.is_nil else codec.encode(batch.encoded())
                host.instance.on_decide(sn_, value)

            def suspect(_self, p):
                host.suspect(p)

            def trace(_self, kind, **fields):
                host.trace(kind, **fields)

        def validator(batch: Batch, sn_: int, view: int) -> tuple:
            seen = host.brb_seen.get(sn_)
            if seen is None:
                return ("defer",)
            if seen == codec.encode(batch.encoded()):
                return ("ok",)
            return ("reject", "mismatches-broadcast")

        inst = PbftInstance(seg, self.scen.n, self.scen.f, self.me, self.auth,
                            _BcServices(), validator=validator,
                            timeout_base=self.scen.timeout_base)
        inst.start()
        return inst

    def _bc_propose(self, sn: int, value) -> None:
        if value is not None:
            self.brb_seen[sn] = value
            self.bc_insts[sn].reoffer_deferred()
        inst = self.bc_insts[sn]
        if value is not None and inst.can_cast() and sn not in inst.cast_sns:
            inst.cast(sn, Batch.from_encoded(codec.decode(value)))

    # plumbing ----------------------------------------------------------------------

    def _fd_event(self, kind: str, peer: int) -> None:
        self.tracer.emit("sus" if kind == "suspect" else "res",
                         nd=self.me, p=peer, src="fd")
        if kind == "suspect" and isinstance(self.instance, ReferenceSb):
            self.instance.on_suspect(peer)

    def _heartbeat_loop(self) -> None:
        # the oracle suite runs heartbeats over reliable broadcast
        if self.hb_mux is None:
            def fanout(msg):
                self.broadcast(msg)
                self.hb_mux.handle(self.me, msg)

            self.hb_mux = HeartbeatBrbMux(
                self.scen.n, self.scen.f, self.me, fanout,
                lambda sender: self.detector.on_heartbeat(sender),
            )
        self.hb_mux.beat()
        self.schedule(self.scen.mean_delay, self._heartbeat_loop)

    def _brb_fanout(self, sn: int, ph: str, v: bytes) -> None:
        msg = {"k": "brb", "sn": sn, "ph": ph, "v": v, "src": self.me}
        self.broadcast(msg)
        self.instance.on_message(self.me, sn, ph, v)

    def crash(self) -> None:
        self.crashed = True
        self.net.crash(self.addr)

    def on_net(self, src_addr, msg: dict) -> None:
        if self.crashed:
            return
        src = src_addr[1]
        kind = msg.get("k")
        if kind == "hbbrb":
            if self.hb_mux is not None:
                self.hb_mux.handle(src, msg)
            return
        if kind == "brb":
            if isinstance(self.instance, ReferenceSb):
                self.instance.on_message(src, msg["sn"], msg["ph"], msg["v"])
            return
        if kind in ("pbft", "raft"):
            if "sig" in msg and (msg.get("src") != src or not verify_message(self.auth, msg)):
                return
            if self.bc_insts:
                from ..domain import parse_instance

                slot, _sigma = parse_instance(msg["inst"])
                if slot in self.bc_insts:
                    self.bc_insts[slot].handle(src, msg)
                    self.bc_insts[slot].reoffer_deferred()
            elif isinstance(self.instance, (PbftInstance, RaftInstance)):
                self.instance.handle(src, msg)


def run_sb_scenario(scen: SbScenario, seed: int) -> list[dict]:
    sched = Scheduler()
    hub = RngHub(seed)
    tracer = Tracer(lambda: sched.now)
    auth = make_authenticator("mac", hashlib.sha256(f"sb/{seed}".encode()).digest())
    net = Network(sched, hub.stream("net"), scen.mean_delay, scen.gst)

    faulty = [scen.crash[0]] if scen.crash else []
    correct = set(range(scen.n)) - set(faulty)
    adjudicator = IdealAdjudicator(sched, net, correct, scen.mean_delay)

    tracer.emit("run", n=scen.n, f=scen.f, policy="none", orderer=scen.binding,
                fault_model="crash" if scen.binding == "raft" else "byzantine",
                epoch_length=scen.num_slots, num_buckets=1, leader_count=0,
                max_leaders=scen.n, gst=scen.gst, horizon=scen.horizon,
                margin=scen.margin, faulty=faulty, partitioned=[],
                clients=0, seed=seed)

    nodes = [_SbNode(i, scen, auth, sched, net, tracer, hub, adjudicator)
             for i in range(scen.n)]

    def make_requests(k: int) -> Batch:
        rng = hub.stream(f"payload/{k}")
        rid = RequestId(k, 0)
        payload = rng.randbytes(16)
        sig = auth.sign(client_identity(0), request_signing_payload(rid, payload))
        return Batch.of([Request(payload=payload, rid=rid, sig=sig)])

    def cast_slot(idx: int) -> None:
        sender = nodes[scen.sigma]
        if sender.crashed or idx >= scen.num_slots:
            return
        batch = make_requests(idx)
        inst = sender.instance
        if isinstance(inst, ReferenceSb):
            tracer.emit("cast", nd=scen.sigma, inst=sender.seg.instance,
                        sn=idx, d=batch.digest())
            inst.cast(idx, batch)
        elif inst.can_cast():
            tracer.emit("cast", nd=scen.sigma, inst=sender.seg.instance,
                        sn=idx, d=batch.digest())
            inst.cast(idx, batch)
        sched.schedule(scen.cast_interval, lambda: cast_slot(idx + 1))

    sched.schedule(scen.cast_interval, lambda: cast_slot(0))
    if scen.crash:
        node, at = scen.crash
        sched.schedule(at, lambda: (tracer.emit("flt", nd=node, what="crash"),
                                    nodes[node].crash()))

    sched.run_until(scen.horizon)
    tracer.emit("end", at=sched.now)
    return tracer.events
