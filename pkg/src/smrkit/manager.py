"""Per-node orchestration: epoch lifecycle, segment creation, proposal
pacing, multiplexing orderer output into the log, in-order delivery,
checkpointing, and state transfer.

The boundary with the orderers is deliberately narrow: the manager hands a
segment to the orderer, and the orderer calls announce(sn, batch) exactly
once per slot.  Orderers never touch the log.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import codec
from .buckets import RequestPool, active_buckets, bucket_of
from .crypto import client_identity, merkle_root, node_identity
from .domain import (
    Batch,
    EpochSchedule,
    Log,
    NodeConfig,
    Request,
    RequestId,
    Segment,
    parse_instance,
    segment_seq_nrs,
)
from .fd import HeartbeatDetector
from .pbft import PbftInstance, sign_message
from .policies import PolicyState
from .raft import RaftInstance
from .sb import HeartbeatBrbMux, ReferenceSb


@dataclass
class Behavior:
    """Scripted deviations for fault scenarios.  A default instance is an
    honest node."""

    straggler: bool = False
    equivocate: bool = False
    wrong_root: bool = False
    corrupt_transfer: bool = False
    crash_epoch_start: Optional[int] = None
    crash_epoch_end: Optional[int] = None

    @property
    def byzantine(self) -> bool:
        return self.straggler or self.equivocate or self.wrong_root


@dataclass
class _SegmentProposer:
    seg: Segment
    cursor: int = 0
    last_time: int = 0
    timer_gen: int = 0


class _InstanceServices:
    """Narrow service surface handed to one orderer instance."""

    def __init__(self, core: "ReplicaCore", inst: str, rng_name: str):
        self._core = core
        self._inst = inst
        self.rng = core.env.rng(rng_name)

    def broadcast(self, msg):
        self._core.env.broadcast(msg)

    def send(self, dst, msg):
        self._core.env.send(dst, msg)

    def schedule(self, delay, cb):
        self._core.env.schedule(delay, cb)

    def now(self):
        return self._core.env.now()

    def announce(self, sn, batch):
        self._core.on_sb_deliver(self._inst, sn, batch)

    def suspect(self, p):
        self._core.on_instance_suspect(self._inst, p)

    def trace(self, kind, **fields):
        self._core.env.trace(kind, **fields)


class ReplicaCore:
    """All protocol state of one node; driven by its host's event loop."""

    def __init__(self, cfg: NodeConfig, me: int, auth, env, clients_count: int,
                 behavior: Optional[Behavior] = None,
                 fd_transport: str = "direct",
                 heartbeat_period: int = 50_000_000,
                 fd_initial_timeout: int = 200_000_000):
        self.cfg = cfg
        self.me = me
        self.auth = auth
        self.env = env  # now/schedule/send/broadcast/send_client/trace/rng/crash_self/adjudicator
        self.clients_count = clients_count
        self.behavior = behavior or Behavior()
        self.fd_transport = fd_transport
        self.heartbeat_period = heartbeat_period
        self.fd_initial_timeout = fd_initial_timeout

        self.log = Log()
        self.schedule = EpochSchedule(cfg.epoch_length)
        self.pool = RequestPool(cfg.num_buckets)
        self.policy = PolicyState(
            cfg.policy, cfg.n, cfg.f, cfg.ban_period, cfg.penalty_decrease,
            cfg.leader_count, cfg.max_leaders(),
        )
        self.current_epoch = -1
        self.epoch_leaders: dict[int, list[int]] = {}
        self.segments: dict[str, Segment] = {}
        self.orderers: dict[str, object] = {}
        self.retained: dict[int, list[str]] = {}  # epoch -> instance tags
        self.skipped_epochs: set[int] = set()
        self.proposers: dict[str, _SegmentProposer] = {}
        self.my_bucket_inst: dict[int, str] = {}
        self.proposed: dict[int, Batch] = {}
        self.proposed_index: dict[RequestId, tuple[str, int]] = {}
        self.delivered_t: dict[int, set[int]] = {}  # client -> delivered timestamps
        self.watermark_low: dict[int, int] = {}
        self.cp_store: dict[int, dict[tuple, dict[int, bytes]]] = {}
        self.my_checkpoint: dict[int, tuple] = {}
        self.stable: dict[int, tuple] = {}  # epoch -> (msn, root, cert)
        self.future_msgs: dict[int, list] = {}
        self.divergence: set[int] = set()
        self.unsafe_commit_quorum: Optional[int] = None
        self._epoch_timer_gen = 0
        self._st_peer = me + 1
        self._st_last_probe = -(10 ** 18)
        self._hb_mux: Optional[HeartbeatBrbMux] = None
        self.detector: Optional[HeartbeatDetector] = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if self.cfg.orderer == "reference":
            self.detector = HeartbeatDetector(
                self.me, self.cfg.n, self.fd_initial_timeout,
                self.env.schedule, self._on_fd_event,
            )
            self.detector.start()
            self._heartbeat_loop()
        self._advance_to_next_epoch(0)

    def _on_fd_event(self, kind: str, peer: int) -> None:
        self.env.trace("sus" if kind == "suspect" else "res", p=peer, src="fd")
        if kind == "suspect":
            for orderer in list(self.orderers.values()):
                if isinstance(orderer, ReferenceSb):
                    orderer.on_suspect(peer)

    def _heartbeat_loop(self) -> None:
        if self.fd_transport == "brb":
            if self._hb_mux is None:
                def fanout(msg):
                    self.env.broadcast(msg)
                    self._hb_mux.handle(self.me, msg)

                self._hb_mux = HeartbeatBrbMux(
                    self.cfg.n, self.cfg.f, self.me, fanout, self._on_heartbeat,
                )
            self._hb_mux.beat()
        else:
            self.env.broadcast({"k": "hb", "src": self.me})
        self.env.schedule(self.heartbeat_period, self._heartbeat_loop)

    def on_hb_brb(self, src: int, msg: dict) -> None:
        if self._hb_mux is not None:
            self._hb_mux.handle(src, msg)

    def _on_heartbeat(self, sender: int) -> None:
        if self.detector is not None:
            self.detector.on_heartbeat(sender)

    # -- epoch lifecycle -------------------------------------------------------

    def _record_epoch_chain(self, e: int) -> int:
        """Record epochs from e on, folding empty-leaderset skips, until one
        has leaders; returns that epoch."""
        while True:
            leaders = self.policy.leaders(e)
            self.schedule.record_epoch(e, len(leaders))
            self.epoch_leaders[e] = leaders
            if leaders:
                return e
            self.skipped_epochs.add(e)
            self.env.trace("skip", e=e)
            self.policy.observe_epoch(e, [], self.log)
            e += 1

    def _advance_to_next_epoch(self, e: int) -> None:
        nxt = self._record_epoch_chain(e)
        self._start_epoch(nxt)

    def build_segments(self, e: int) -> list[Segment]:
        leaders = self.epoch_leaders[e]
        sns = self.schedule.seq_nrs(e)
        return [
            Segment(
                epoch=e,
                leader=leader,
                index=idx,
                seq_nrs=segment_seq_nrs(sns, idx, len(leaders)),
                buckets=active_buckets(e, leaders, leader, self.cfg.n, self.cfg.num_buckets),
            )
            for idx, leader in enumerate(leaders)
        ]

    def _start_epoch(self, e: int) -> None:
        if self.behavior.crash_epoch_start == e:
            self.env.trace("flt", what="crash-epoch-start", e=e)
            self.env.crash_self()
            return
        self.current_epoch = e
        leaders = self.epoch_leaders[e]
        self.proposed_index.clear()
        self.my_bucket_inst.clear()
        self.env.trace("ep", e=e, first=self.schedule.first_sn(e), leaders=leaders)
        self.retained.setdefault(e, [])
        for seg in self.build_segments(e):
            inst = seg.instance
            self.segments[inst] = seg
            self.retained[e].append(inst)
            self.orderers[inst] = self._make_instance(seg)
            self.env.trace("init", inst=inst, sigma=seg.leader, sns=list(seg.seq_nrs))
            if seg.leader == self.me:
                start = self.env.now() if self.behavior.straggler else (
                    self.env.now() - self._spacing()
                )
                self.proposers[inst] = _SegmentProposer(seg=seg, last_time=start)
                for b in seg.buckets:
                    self.my_bucket_inst[b] = inst
        if e > 0:
            assign = {"k": "assign", "e": e, "leaders": leaders}
            signed = sign_message(self.auth, self.me, assign)
            for c in range(self.clients_count):
                self.env.send_client(c, signed)
        for inst in list(self.proposers):
            if self.segments[inst].epoch == e:
                self._evaluate_proposer(inst)
        self._arm_epoch_timer()
        for src, msg in self.future_msgs.pop(e, []):
            self.on_message(src, msg)

    def _make_instance(self, seg: Segment):
        inst = seg.instance
        sv = _InstanceServices(self, inst, f"inst/{inst}/{self.me}")
        if self.cfg.orderer == "pbft":
            instance = PbftInstance(
                seg, self.cfg.n, self.cfg.f, self.me, self.auth, sv,
                validator=self._make_validator(seg),
                timeout_base=self.cfg.epoch_change_timeout,
                in_flight_budget=self.cfg.in_flight_budget,
                commit_quorum=self.unsafe_commit_quorum,
            )
            instance.start()
            return instance
        if self.cfg.orderer == "raft":
            mean = getattr(self.env, "mean_delay", 50_000_000)
            instance = RaftInstance(
                seg, self.cfg.n, self.me, sv,
                election_range=(2 * mean, 4 * mean),
                heartbeat_period=max(mean // 2, 1),
            )
            instance.start()
            return instance
        if self.cfg.orderer == "reference":
            adj = self.env.adjudicator
            adj.register(inst, seg.seq_nrs)
            me = self.me

            class _Port:
                def propose(_self, sn, value):
                    adj.propose(inst, sn, value, me)

            validator = self._make_validator(seg)
            instance = ReferenceSb(
                self.cfg.n, self.cfg.f, self.me, seg.leader, seg.seq_nrs,
                consensus=_Port(),
                broadcast=lambda sn, ph, v, inst=inst: self._brb_fanout(inst, sn, ph, v),
                deliver=lambda sn, batch, inst=inst: self.on_sb_deliver(inst, sn, batch),
                admissible=lambda sn, b, val=validator: val(b, sn, 0)[0] == "ok",
            )
            suspected = self.detector is not None and seg.leader in self.detector.suspected
            instance.init(suspected_now=suspected)
            return instance
        raise ValueError(f"orderer: unknown value {self.cfg.orderer!r}")

    def _brb_fanout(self, inst: str, sn: int, ph: str, v: bytes) -> None:
        msg = {"k": "brb", "inst": inst, "sn": sn, "ph": ph, "v": v, "src": self.me}
        self.env.broadcast(msg)
        orderer = self.orderers.get(inst)
        if isinstance(orderer, ReferenceSb):
            orderer.on_message(self.me, sn, ph, v)

    # -- request intake ---------------------------------------------------------

    def validate_request(self, req: Request) -> tuple[bool, str]:
        if req.rid.c < 0 or req.rid.c >= self.clients_count:
            return False, "unknown-client"
        if self.cfg.validate_signatures:
            if not self.auth.verify(client_identity(req.rid.c), req.signing_payload(), req.sig):
                return False, "bad-signature"
        low = self.watermark_low.get(req.rid.c, 0)
        if not (low <= req.rid.t < low + self.cfg.watermark_width):
            return False, "outside-watermarks"
        return True, ""

    def on_client_request(self, req: Request) -> None:
        ok, _reason = self.validate_request(req)
        if not ok:
            return
        if req.rid.t in self.delivered_t.get(req.rid.c, ()):
            return  # committed already; a late copy must not re-enter a queue
        if not self.pool.add(req):
            return  # seen before; queues are idempotent
        inst = self.my_bucket_inst.get(bucket_of(req.rid, self.cfg.num_buckets))
        if inst is not None:
            self._evaluate_proposer(inst)

    # -- proposing ----------------------------------------------------------------

    def _spacing(self) -> int:
        if self.behavior.straggler:
            return self.cfg.epoch_change_timeout // 2
        rate_gap = 0
        if self.cfg.batch_rate > 0 and self.current_epoch >= 0:
            num_leaders = max(1, self.schedule.num_leaders(self.current_epoch))
            rate_gap = int(num_leaders * 1_000_000_000 / self.cfg.batch_rate)
        return max(self.cfg.min_batch_timeout, rate_gap)

    def _evaluate_proposer(self, inst: str) -> None:
        prop = self.proposers.get(inst)
        if prop is None:
            return
        seg = prop.seg
        orderer = self.orderers.get(inst)
        if orderer is None:
            return
        spacing = self._spacing()
        while prop.cursor < len(seg.seq_nrs):
            if not orderer.can_cast():
                return  # re-evaluated when commits free the budget
            sn = seg.seq_nrs[prop.cursor]
            now = self.env.now()
            earliest = prop.last_time + spacing
            if now < earliest:
                self._arm_proposer_timer(prop, inst, earliest - now)
                return
            if self.behavior.straggler:
                batch = Batch.of([])
            else:
                deadline = max(earliest, prop.last_time + self.cfg.max_batch_timeout)
                ready = self.pool.pending_count(seg.buckets) >= self.cfg.max_batch_size
                if not ready and now < deadline:
                    self._arm_proposer_timer(prop, inst, deadline - now)
                    return
                batch = self.pool.cut_batch(seg.buckets, self.cfg.max_batch_size)
            if (
                self.behavior.crash_epoch_end == seg.epoch
                and prop.cursor == len(seg.seq_nrs) - 1
            ):
                self.env.trace("flt", what="crash-epoch-end", e=seg.epoch)
                self.env.crash_self()
                return
            self._cast(inst, orderer, sn, batch)
            self.proposed[sn] = batch
            prop.cursor += 1
            prop.last_time = now

    def _cast(self, inst: str, orderer, sn: int, batch: Batch) -> None:
        self.env.trace("cast", inst=inst, sn=sn, d=batch.digest())
        if isinstance(orderer, PbftInstance):
            alt = Batch.of([]) if (self.behavior.equivocate and len(batch)) else None
            orderer.cast(sn, batch, alt=alt)
        else:
            orderer.cast(sn, batch)

    def _arm_proposer_timer(self, prop: _SegmentProposer, inst: str, delay: int) -> None:
        prop.timer_gen += 1
        gen = prop.timer_gen
        self.env.schedule(max(delay, 1), lambda: self._proposer_fire(inst, gen))

    def _proposer_fire(self, inst: str, gen: int) -> None:
        prop = self.proposers.get(inst)
        if prop is not None and prop.timer_gen == gen:
            self._evaluate_proposer(inst)

    # -- commit path -----------------------------------------------------------------

    def on_sb_deliver(self, inst: str, sn: int, batch: Batch) -> None:
        self.env.trace("dlv", inst=inst, sn=sn, d=batch.digest(), nil=batch.is_nil)
        self._absorb_commit(inst, sn, batch)
        for tag in list(self.proposers):
            self._evaluate_proposer(tag)
        self._check_epoch_complete()

    def _absorb_commit(self, inst: str, sn: int, batch: Batch) -> None:
        if not self.log.commit(sn, batch):
            return
        seg = self.segments.get(inst)
        epoch = seg.epoch if seg else self.current_epoch
        rids = [[r.rid.t, r.rid.c] for r in batch.requests] if batch.requests else []
        self.env.trace(
            "commit", sn=sn, e=epoch, inst=inst, d=batch.digest(),
            nil=batch.is_nil, rids=rids,
        )
        if batch.requests:
            for req in batch.requests:
                self.delivered_t.setdefault(req.rid.c, set()).add(req.rid.t)
                self.pool.remove(req.rid)
        elif batch.is_nil and sn in self.proposed:
            self.pool.resurrect(self.proposed[sn], self._delivered_view())
        self._deliver_in_order()

    def _delivered_view(self):
        core = self

        class _View:
            def __contains__(_self, rid: RequestId) -> bool:
                return rid.t in core.delivered_t.get(rid.c, ())

        return _View()

    def _deliver_in_order(self) -> None:
        for req, snr, sn, pos in self.log.advance():
            self.env.trace("smr", rid=[req.rid.t, req.rid.c], snr=snr, sn=sn, pos=pos)
            resp = {"k": "resp", "rid": [req.rid.t, req.rid.c], "snr": snr}
            self.env.send_client(req.rid.c, sign_message(self.auth, self.me, resp))

    def _check_epoch_complete(self) -> None:
        e = self.current_epoch
        if e < 0 or e != self.schedule.recorded - 1:
            return
        if not all(self.log.committed(sn) for sn in self.schedule.seq_nrs(e)):
            return
        segs = [self.segments[i] for i in self.retained.get(e, [])]
        self.policy.observe_epoch(e, segs, self.log)
        self._advance_watermarks()
        self._broadcast_checkpoint(e)
        self._advance_to_next_epoch(e + 1)

    def _advance_watermarks(self) -> None:
        for c, delivered in self.delivered_t.items():
            low = self.watermark_low.get(c, 0)
            while low in delivered:
                delivered.discard(low)
                self.pool.forget(RequestId(low, c))
                low += 1
            self.watermark_low[c] = low

    # -- checkpointing ------------------------------------------------------------------

    def _epoch_root(self, e: int) -> bytes:
        leaves = [self.log.get(sn).digest() for sn in self.schedule.seq_nrs(e)]
        return merkle_root(leaves)

    def _broadcast_checkpoint(self, e: int) -> None:
        root = self._epoch_root(e)
        if self.behavior.wrong_root:
            root = bytes(b ^ 0xFF for b in root)
        msn = self.schedule.max_sn(e)
        self.my_checkpoint[e] = (msn, root)
        self.env.trace("cp", e=e, root=root)
        msg = sign_message(self.auth, self.me, {"k": "cp", "e": e, "msn": msn, "root": root})
        self.env.broadcast(msg)
        self._record_checkpoint(self.me, msg)

    def on_checkpoint(self, src: int, msg: dict) -> None:
        self._record_checkpoint(src, msg)

    def _record_checkpoint(self, src: int, msg: dict) -> None:
        e = msg["e"]
        sigs = self.cp_store.setdefault(e, {}).setdefault((msg["msn"], msg["root"]), {})
        sigs[src] = msg["sig"]
        self._evaluate_checkpoint(e)

    def _evaluate_checkpoint(self, e: int) -> None:
        mine = self.my_checkpoint.get(e)
        if mine is None:
            return
        store = self.cp_store.get(e, {})
        if e not in self.stable:
            matching = store.get(mine, {})
            if len(matching) >= self.cfg.strong_quorum:
                cert = sorted(matching.items())[: self.cfg.strong_quorum]
                self.stable[e] = (mine[0], mine[1], cert)
                self.env.trace("cps", e=e, root=mine[1], signers=[s for s, _ in cert])
                self._gc_epoch(e)
        mismatch = {s for key, sigs in store.items() if key != mine for s in sigs}
        if len(mismatch) > self.cfg.f and e not in self.divergence:
            self.divergence.add(e)
            self.env.trace("div", e=e)

    def _gc_epoch(self, e: int) -> None:
        for inst in self.retained.pop(e, []):
            orderer = self.orderers.pop(inst, None)
            if orderer is not None and hasattr(orderer, "stop"):
                orderer.stop()
            self.proposers.pop(inst, None)
            seg = self.segments.get(inst)
            if seg is not None:
                for sn in seg.seq_nrs:
                    self.proposed.pop(sn, None)

    # -- epoch timer / catch-up -------------------------------------------------------------

    def _arm_epoch_timer(self) -> None:
        self._epoch_timer_gen += 1
        gen = self._epoch_timer_gen
        epoch = self.current_epoch
        self.env.schedule(2 * self.cfg.epoch_change_timeout,
                          lambda: self._epoch_timer_fire(epoch, gen))

    def _epoch_timer_fire(self, epoch: int, gen: int) -> None:
        if gen != self._epoch_timer_gen or epoch != self.current_epoch:
            return
        self._probe_state_transfer()
        for inst in self.retained.get(epoch, []):
            orderer = self.orderers.get(inst)
            if isinstance(orderer, PbftInstance):
                orderer.request_catchup()
        self._arm_epoch_timer()

    # -- state transfer ---------------------------------------------------------------------

    def _probe_state_transfer(self, force: bool = False) -> None:
        now = self.env.now()
        if not force and now - self._st_last_probe < self.cfg.epoch_change_timeout // 2:
            return
        self._st_last_probe = now
        peer = self._st_peer % self.cfg.n
        if peer == self.me:
            peer = (peer + 1) % self.cfg.n
        self._st_peer = peer + 1
        self.env.trace("st-req", peer=peer, e=self.current_epoch)
        self.env.send(peer, {"k": "st-req", "e": self.current_epoch, "src": self.me})

    def on_st_req(self, src: int, msg: dict) -> None:
        packages = []
        for e in range(max(msg["e"], 0), self.current_epoch):
            if e in self.skipped_epochs:
                continue
            if e not in self.stable:
                break
            msn, _root, cert = self.stable[e]
            batches = [self.log.get(sn).encoded() for sn in self.schedule.seq_nrs(e)]
            if self.behavior.corrupt_transfer and batches:
                batches = list(batches)
                batches[0] = Batch.of([]).encoded() if batches[0] is None else None
            packages.append({"e": e, "msn": msn, "batches": batches,
                             "cert": [[s, sig] for s, sig in cert]})
        if packages:
            self.env.send(src, {"k": "st-resp", "pkgs": packages, "src": self.me})

    def on_st_resp(self, src: int, msg: dict) -> None:
        by_epoch = {p["e"]: p for p in msg["pkgs"]}
        progressed = False
        while True:
            e = self.current_epoch
            pkg = by_epoch.get(e)
            if pkg is None:
                break
            if not self._install_package(src, e, pkg):
                self._probe_state_transfer(force=True)
                break
            progressed = True
            self.current_epoch = self._record_epoch_chain(e + 1)
        if progressed:
            self._resume_after_transfer()

    def _install_package(self, src: int, e: int, pkg: dict) -> bool:
        if len(pkg["batches"]) != self.cfg.epoch_length:
            self.env.trace("st-fail", peer=src, e=e, reason="length")
            return False
        batches = [Batch.from_encoded(b) for b in pkg["batches"]]
        root = merkle_root([b.digest() for b in batches])
        msn = self.schedule.first_sn(e) + self.cfg.epoch_length - 1
        if pkg["msn"] != msn:
            self.env.trace("st-fail", peer=src, e=e, reason="range")
            return False
        payload = codec.encode({"k": "cp", "e": e, "msn": msn, "root": root})
        seen = set()
        for s, sig in pkg["cert"]:
            if s in seen or not self.auth.verify(node_identity(s), payload, sig):
                self.env.trace("st-fail", peer=src, e=e, reason="cert")
                return False
            seen.add(s)
        if len(seen) < self.cfg.strong_quorum:
            self.env.trace("st-fail", peer=src, e=e, reason="quorum")
            return False
        segs = self.build_segments(e)
        leaders = self.epoch_leaders[e]
        for seg in segs:
            self.segments.setdefault(seg.instance, seg)
        for sn, batch in zip(self.schedule.seq_nrs(e), batches):
            inst = segs[sn % len(leaders)].instance
            self._absorb_commit(inst, sn, batch)
        if self.policy.observed == e:
            self.policy.observe_epoch(e, segs, self.log)
        self._advance_watermarks()
        self.my_checkpoint[e] = (msn, root)
        self.stable.setdefault(e, (msn, root, [(s, sig) for s, sig in pkg["cert"]]))
        self.env.trace("st-ok", peer=src, e=e)
        return True

    def _resume_after_transfer(self) -> None:
        for e in [e for e in list(self.retained) if e < self.current_epoch]:
            self._gc_epoch(e)
        self._start_epoch(self.current_epoch)
        for inst in self.retained.get(self.current_epoch, []):
            orderer = self.orderers.get(inst)
            if isinstance(orderer, PbftInstance):
                orderer.request_catchup()

    # -- validation --------------------------------------------------------------------------

    def _make_validator(self, seg: Segment):
        inst = seg.instance

        def validator(batch: Batch, sn: int, view: int) -> tuple:
            if not batch.requests:
                return ("ok",)
            for req in batch.requests:
                ok, reason = self.validate_request(req)
                if not ok:
                    return ("reject", "a:" + reason)
                if req.rid.t in self.delivered_t.get(req.rid.c, ()):
                    return ("reject", "b:committed")
                prior = self.proposed_index.get(req.rid)
                if prior is not None and prior != (inst, sn):
                    return ("reject", "b:proposed")
                if bucket_of(req.rid, self.cfg.num_buckets) not in seg.buckets:
                    return ("reject", "c:foreign-bucket")
            for req in batch.requests:
                self.proposed_index[req.rid] = (inst, sn)
            return ("ok",)

        return validator

    # -- inbound dispatch ---------------------------------------------------------------------

    def on_message(self, src: int, msg: dict) -> None:
        kind = msg["k"]
        if kind == "req":
            self.on_client_request(Request.from_encoded(msg["r"]))
        elif kind == "hb":
            self._on_heartbeat(src)
        elif kind == "hbbrb":
            self.on_hb_brb(src, msg)
        elif kind == "cp":
            self.on_checkpoint(src, msg)
        elif kind == "st-req":
            self.on_st_req(src, msg)
        elif kind == "st-resp":
            self.on_st_resp(src, msg)
        elif kind in ("pbft", "raft", "brb"):
            inst = msg["inst"]
            orderer = self.orderers.get(inst)
            if orderer is not None:
                if kind == "brb":
                    orderer.on_message(src, msg["sn"], msg["ph"], msg["v"])
                else:
                    orderer.handle(src, msg)
                return
            epoch, _leader = parse_instance(inst)
            if epoch == self.current_epoch + 1 and self.current_epoch >= 0:
                self.future_msgs.setdefault(epoch, []).append((src, msg))
            elif epoch > self.current_epoch + 1:
                self._probe_state_transfer()

    def on_bc_decide(self, inst: str, sn: int, value) -> None:
        orderer = self.orderers.get(inst)
        if isinstance(orderer, ReferenceSb):
            orderer.on_decide(sn, value)

    def on_instance_suspect(self, inst: str, p: int) -> None:
        self.env.trace("sus", p=p, src=inst)

    # -- snapshots for harness assertions --------------------------------------------------------

    def log_prefix_digests(self) -> list[bytes]:
        out = []
        sn = 0
        while self.log.committed(sn):
            out.append(self.log.get(sn).digest())
            sn += 1
        return out
