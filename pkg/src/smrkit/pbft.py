"""Three-phase byzantine agreement per segment slot, adapted for segmented
logs:

* the initial primary is the segment leader, and only it may introduce
  non-nil values (in view 0);
* after a view change, the new primary re-proposes prepared values and
  fills every other slot with nil, so instances always terminate;
* the liveness timer watches batch commits, not individual requests, and
  is reset by any commit;
* view changes carry signed prepared certificates, and 2f+1 signed commits
  form a transferable commit certificate used for catch-up.

Instances are deterministic state machines; all scheduling and transport
comes from the owner through the services object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import codec
from .crypto import node_identity
from .domain import Batch, Segment

MAX_VIEW = 24  # doubling cap; beyond this the run is considered broken


def sign_message(auth, me: int, msg: dict) -> dict:
    payload = codec.encode(msg)
    return {**msg, "src": me, "sig": auth.sign(node_identity(me), payload)}


def verify_message(auth, msg: dict) -> bool:
    src = msg.get("src")
    sig = msg.get("sig")
    if not isinstance(src, int) or not isinstance(sig, bytes):
        return False
    bare = {k: v for k, v in msg.items() if k not in ("src", "sig")}
    return auth.verify(node_identity(src), codec.encode(bare), sig)


@dataclass
class _Slot:
    pps: dict = field(default_factory=dict)  # view -> (digest, batch, pp_sig)
    prepare_sigs: dict = field(default_factory=dict)  # (view, digest) -> {src: sig}
    commit_sigs: dict = field(default_factory=dict)  # (view, digest) -> {src: sig}
    prepared: Optional[tuple] = None  # (view, digest)
    commit_sent: set = field(default_factory=set)  # (view, digest)
    committed: Optional[Batch] = None
    committed_vd: Optional[tuple] = None
    awaiting_digest: Optional[tuple] = None  # (view, digest) commit blocked on batch


class PbftInstance:
    """One sequenced-broadcast instance bound to a segment.

    services must provide: broadcast(msg), send(dst, msg), schedule(delay,
    cb), now(), announce(sn, batch), suspect(p), trace(kind, **fields).
    The validator is called for non-nil values and returns ("ok",),
    ("reject", reason) or ("defer",); deferred proposals are retried when
    the owner calls reoffer_deferred().
    """

    def __init__(
        self,
        seg: Segment,
        n: int,
        f: int,
        me: int,
        auth,
        services,
        validator: Callable[[Batch, int, int], tuple],
        timeout_base: int,
        in_flight_budget: int = 8,
        commit_quorum: Optional[int] = None,
    ):
        self.seg = seg
        self.n = n
        self.f = f
        self.me = me
        self.auth = auth
        self.sv = services
        self.validator = validator
        self.timeout_base = timeout_base
        self.budget = in_flight_budget
        if commit_quorum:  # deliberately broken quorums, for negative tests
            self.commit_quorum = commit_quorum
            self.prepare_quorum = max(1, commit_quorum - 1)
        else:
            self.commit_quorum = 2 * f + 1
            self.prepare_quorum = 2 * f

        self.view = 0
        self.in_view_change = False
        self.slots = {sn: _Slot() for sn in seg.seq_nrs}
        self.digest_store: dict[bytes, Batch] = {}
        self.proposed_by_seg_leader: set[int] = set()
        self.cast_sns: set[int] = set()
        self.in_flight = 0
        self.announced: set[int] = set()
        self.vc_msgs: dict[int, dict[int, dict]] = {}
        self.vc_joined = 0  # highest view I sent a view change for
        self.nv_sent: set[int] = set()
        self.stopped = False
        self._timer_gen = 0
        self._deferred: list[tuple[int, dict]] = []
        self._future_view: list[tuple[int, dict]] = []

    # -- plumbing ----------------------------------------------------------

    def _primary(self, view: int) -> int:
        return (self.seg.leader + view) % self.n

    def _msg(self, ph: str, **fields) -> dict:
        return {"k": "pbft", "inst": self.seg.instance, "ph": ph, **fields}

    def _bcast(self, msg: dict) -> dict:
        signed = sign_message(self.auth, self.me, msg)
        self.sv.broadcast(signed)
        return signed

    def start(self) -> None:
        self._arm_timer()

    def stop(self) -> None:
        self.stopped = True
        self._timer_gen += 1

    def _arm_timer(self) -> None:
        self._timer_gen += 1
        gen = self._timer_gen
        exponent = min(self.view, MAX_VIEW)
        self.sv.schedule(self.timeout_base * (2 ** exponent), lambda: self._timer_fire(gen))

    def _cancel_timer(self) -> None:
        self._timer_gen += 1

    def _timer_fire(self, gen: int) -> None:
        if gen != self._timer_gen or self.stopped or self.all_committed:
            return
        self._start_view_change(max(self.view, self.vc_joined) + 1)

    @property
    def all_committed(self) -> bool:
        return len(self.announced) == len(self.slots)

    # -- proposing ---------------------------------------------------------

    def can_cast(self) -> bool:
        return (
            self.me == self.seg.leader
            and self.view == 0
            and not self.in_view_change
            and not self.stopped
            and self.in_flight < self.budget
        )

    def cast(self, sn: int, batch: Batch, alt: Optional[Batch] = None) -> None:
        """Primary proposal for a slot.  ``alt`` is the scripted-equivocation
        hook: half the followers get the alternative value."""
        assert self.can_cast() and sn in self.slots and sn not in self.cast_sns
        assert not batch.is_nil, "nil is reserved for view-change fallback"
        self.cast_sns.add(sn)
        self.in_flight += 1
        d = batch.digest()
        msg = self._msg("pp", v=0, sn=sn, d=d, b=batch.encoded())
        signed = sign_message(self.auth, self.me, msg)
        if alt is None:
            self.sv.broadcast(signed)
        else:
            alt_msg = self._msg("pp", v=0, sn=sn, d=alt.digest(), b=alt.encoded())
            alt_signed = sign_message(self.auth, self.me, alt_msg)
            others = [p for p in range(self.n) if p != self.me]
            for idx, dst in enumerate(others):
                self.sv.send(dst, signed if idx < len(others) // 2 else alt_signed)
        self._accept_pp(0, sn, d, batch, signed["sig"])

    # -- message handling ----------------------------------------------------

    def handle(self, src: int, msg: dict) -> None:
        if self.stopped:
            ph = msg.get("ph")
            if ph in ("cu-req", "fetch"):
                pass  # still serve catch-up from retained state
            else:
                return
        ph = msg["ph"]
        if ph == "pp":
            self._on_pp(src, msg)
        elif ph == "p":
            self._on_prepare(src, msg)
        elif ph == "c":
            self._on_commit(src, msg)
        elif ph == "vc":
            self._on_vc(src, msg)
        elif ph == "nv":
            self._on_nv(src, msg)
        elif ph == "fetch":
            self._on_fetch(src, msg)
        elif ph == "fetch-resp":
            self._on_fetch_resp(src, msg)
        elif ph == "cu-req":
            self._on_cu_req(src, msg)
        elif ph == "cu-resp":
            self._on_cu_resp(src, msg)

    def reoffer_deferred(self) -> None:
        pending, self._deferred = self._deferred, []
        for src, msg in pending:
            self._on_pp(src, msg)

    def _on_pp(self, src: int, msg: dict) -> None:
        v, sn = msg["v"], msg["sn"]
        if sn not in self.slots or v < self.view:
            return
        if v > self.view:
            self._future_view.append((src, msg))
            return
        if src != self._primary(v):
            return
        slot = self.slots[sn]
        if slot.committed is not None:
            return  # slot already final (commit certificate raced ahead)
        if v in slot.pps:
            return  # first proposal for this view wins locally
        batch = Batch.from_encoded(msg["b"])
        if batch.digest() != msg["d"]:
            return
        if batch.is_nil and v == 0:
            self.sv.trace("rej", inst=self.seg.instance, sn=sn, reason="nil-in-view0")
            return
        if not batch.is_nil:
            verdict = self.validator(batch, sn, v)
            if verdict[0] == "reject":
                self.sv.trace("rej", inst=self.seg.instance, sn=sn, reason=verdict[1])
                return
            if verdict[0] == "defer":
                self._deferred.append((src, msg))
                return
        self._accept_pp(v, sn, msg["d"], batch, msg["sig"])

    def _accept_pp(self, v: int, sn: int, d: bytes, batch: Batch, pp_sig: bytes) -> None:
        slot = self.slots[sn]
        slot.pps[v] = (d, batch, pp_sig)
        self.digest_store[d] = batch
        if v == 0:
            self.proposed_by_seg_leader.add(sn)
        if self.me != self._primary(v):
            prep = self._msg("p", v=v, sn=sn, d=d)
            signed = self._bcast(prep)
            slot.prepare_sigs.setdefault((v, d), {})[self.me] = signed["sig"]
        self._check_prepared(sn, v, d)

    def _on_prepare(self, src: int, msg: dict) -> None:
        v, sn, d = msg["v"], msg["sn"], msg["d"]
        if sn not in self.slots or src == self._primary(v):
            return
        self.slots[sn].prepare_sigs.setdefault((v, d), {})[src] = msg["sig"]
        self._check_prepared(sn, v, d)

    def _check_prepared(self, sn: int, v: int, d: bytes) -> None:
        slot = self.slots[sn]
        if v != self.view or v not in slot.pps or slot.pps[v][0] != d:
            return
        if len(slot.prepare_sigs.get((v, d), {})) < self.prepare_quorum:
            return
        if slot.prepared is None or slot.prepared[0] < v:
            slot.prepared = (v, d)
        if (v, d) not in slot.commit_sent:
            slot.commit_sent.add((v, d))
            commit = self._msg("c", v=v, sn=sn, d=d)
            signed = self._bcast(commit)
            slot.commit_sigs.setdefault((v, d), {})[self.me] = signed["sig"]
        self._check_committed(sn, v, d)

    def _on_commit(self, src: int, msg: dict) -> None:
        v, sn, d = msg["v"], msg["sn"], msg["d"]
        if sn not in self.slots:
            return
        self.slots[sn].commit_sigs.setdefault((v, d), {})[src] = msg["sig"]
        self._check_committed(sn, v, d)

    def _check_committed(self, sn: int, v: int, d: bytes) -> None:
        slot = self.slots[sn]
        if slot.committed is not None:
            return
        if len(slot.commit_sigs.get((v, d), {})) < self.commit_quorum:
            return
        batch = self.digest_store.get(d)
        if batch is None:
            slot.awaiting_digest = (v, d)
            self._bcast(self._msg("fetch", sn=sn, d=d))
            return
        self._commit_slot(sn, v, d, batch)

    def _commit_slot(self, sn: int, v: int, d: bytes, batch: Batch) -> None:
        slot = self.slots[sn]
        if slot.committed is not None:
            return
        slot.committed = batch
        slot.committed_vd = (v, d)
        slot.awaiting_digest = None
        if sn in self.cast_sns:
            self.in_flight -= 1
        if sn not in self.announced:
            self.announced.add(sn)
            self.sv.announce(sn, batch)
        if self.all_committed:
            self._cancel_timer()
        else:
            self._arm_timer()

    # -- view changes --------------------------------------------------------

    def _start_view_change(self, target: int) -> None:
        if target <= self.vc_joined or target > MAX_VIEW or self.stopped:
            return
        failed_primary = self._primary(self.view)
        self.in_view_change = True
        self.vc_joined = target
        self.sv.suspect(failed_primary)
        self.sv.trace("vc", inst=self.seg.instance, v=target)
        certs = []
        for sn in self.seg.seq_nrs:
            slot = self.slots[sn]
            if slot.prepared is None:
                continue
            pv, pd = slot.prepared
            pp_sig = slot.pps[pv][2]
            sigs = slot.prepare_sigs.get((pv, pd), {})
            ps = sorted(sigs.items())[: self.prepare_quorum]
            batch = self.digest_store[pd]
            certs.append(
                {"sn": sn, "v": pv, "d": pd, "b": batch.encoded(),
                 "pp_sig": pp_sig, "ps": [[s, sig] for s, sig in ps]}
            )
        msg = self._msg("vc", nv=target, certs=certs)
        signed = self._bcast(msg)
        self.vc_msgs.setdefault(target, {})[self.me] = signed
        # retry with the next view if this one stalls
        self._arm_timer()
        self._maybe_new_view(target)

    def _verify_cert(self, cert: dict) -> bool:
        sn, v, d = cert["sn"], cert["v"], cert["d"]
        if sn not in self.slots:
            return False
        batch = Batch.from_encoded(cert["b"])
        if batch.digest() != d:
            return False
        pp_payload = codec.encode(self._msg("pp", v=v, sn=sn, d=d, b=cert["b"]))
        if not self.auth.verify(node_identity(self._primary(v)), pp_payload, cert["pp_sig"]):
            return False
        seen = set()
        prep_payload = codec.encode(self._msg("p", v=v, sn=sn, d=d))
        for src, sig in cert["ps"]:
            if src in seen or src == self._primary(v):
                return False
            if not self.auth.verify(node_identity(src), prep_payload, sig):
                return False
            seen.add(src)
        return len(seen) >= self.prepare_quorum

    def _on_vc(self, src: int, msg: dict) -> None:
        target = msg["nv"]
        if target <= self.view or target > MAX_VIEW:
            return
        for cert in msg["certs"]:
            if not self._verify_cert(cert):
                return
        self.vc_msgs.setdefault(target, {})[src] = msg
        # join a view change once f+1 nodes are ahead of us
        ahead = {s for t, msgs in self.vc_msgs.items() if t > self.vc_joined for s in msgs}
        if len(ahead) >= self.f + 1:
            self._start_view_change(max(t for t in self.vc_msgs if t > self.vc_joined))
        self._maybe_new_view(target)

    def _maybe_new_view(self, target: int) -> None:
        if self.me != self._primary(target) or target in self.nv_sent:
            return
        msgs = self.vc_msgs.get(target, {})
        if len(msgs) < 2 * self.f + 1:
            return
        self.nv_sent.add(target)
        chosen = [msgs[src] for src in sorted(msgs)[: 2 * self.f + 1]]
        pps = self._new_view_values(chosen, target)
        msg = self._msg("nv", nv=target, vcs=chosen, pps=pps)
        self._bcast(msg)
        self._enter_view(target, pps)

    def _new_view_values(self, vc_set: list[dict], target: int) -> list:
        """Per slot: the prepared value of the highest view found in the
        view-change set, nil otherwise.  Each entry is signed as the
        pre-prepare of the new view."""
        best: dict[int, tuple] = {}
        for vc in vc_set:
            for cert in vc["certs"]:
                sn = cert["sn"]
                if sn not in best or best[sn][0] < cert["v"]:
                    best[sn] = (cert["v"], cert["d"], cert["b"])
        pps = []
        for sn in self.seg.seq_nrs:
            if sn in best:
                _, d, b = best[sn]
            else:
                nil = Batch.nil()
                d, b = nil.digest(), nil.encoded()
            payload = codec.encode(self._msg("pp", v=target, sn=sn, d=d, b=b))
            sig = self.auth.sign(node_identity(self.me), payload)
            pps.append([sn, d, b, sig])
        return pps

    def _on_nv(self, src: int, msg: dict) -> None:
        target = msg["nv"]
        if target <= self.view or src != self._primary(target) or target > MAX_VIEW:
            return
        seen = set()
        for vc in msg["vcs"]:
            if not verify_message(self.auth, vc) or vc.get("ph") != "vc" or vc.get("nv") != target:
                return
            if vc.get("inst") != self.seg.instance or vc["src"] in seen:
                return
            for cert in vc["certs"]:
                if not self._verify_cert(cert):
                    return
            seen.add(vc["src"])
        if len(seen) < 2 * self.f + 1:
            return
        expected = self._expected_nv_values(msg["vcs"], target)
        got = {pp[0]: pp[1] for pp in msg["pps"]}
        if expected != got:
            return
        self._enter_view(target, msg["pps"])

    def _expected_nv_values(self, vc_set: list[dict], target: int) -> dict:
        best: dict[int, tuple] = {}
        for vc in vc_set:
            for cert in vc["certs"]:
                sn = cert["sn"]
                if sn not in best or best[sn][0] < cert["v"]:
                    best[sn] = (cert["v"], cert["d"])
        nil_d = Batch.nil().digest()
        return {sn: (best[sn][1] if sn in best else nil_d) for sn in self.seg.seq_nrs}

    def _enter_view(self, target: int, pps: list) -> None:
        self.view = target
        self.in_view_change = False
        self.vc_joined = max(self.vc_joined, target)
        self._arm_timer()
        pp_payload_check = self._primary(target) != self.me
        for sn, d, b, sig in pps:
            slot = self.slots.get(sn)
            if slot is None or slot.committed is not None or target in slot.pps:
                continue
            batch = Batch.from_encoded(b)
            if batch.digest() != d:
                continue
            if pp_payload_check:
                payload = codec.encode(self._msg("pp", v=target, sn=sn, d=d, b=b))
                if not self.auth.verify(node_identity(self._primary(target)), payload, sig):
                    continue
            if not batch.is_nil:
                verdict = self.validator(batch, sn, target)
                if verdict[0] == "reject":
                    self.sv.trace("rej", inst=self.seg.instance, sn=sn, reason=verdict[1])
                    continue
                if verdict[0] == "defer":
                    self._deferred.append((self._primary(target), self._msg(
                        "pp", v=target, sn=sn, d=d, b=b) | {"src": self._primary(target), "sig": sig}))
                    continue
            self._accept_pp(target, sn, d, batch, sig)
        pending, self._future_view = self._future_view, []
        for src, m in pending:
            self._on_pp(src, m)

    # -- catch-up ------------------------------------------------------------

    def _on_fetch(self, src: int, msg: dict) -> None:
        batch = self.digest_store.get(msg["d"])
        if batch is not None:
            resp = self._msg("fetch-resp", sn=msg["sn"], d=msg["d"], b=batch.encoded())
            self.sv.send(src, sign_message(self.auth, self.me, resp))

    def _on_fetch_resp(self, src: int, msg: dict) -> None:
        batch = Batch.from_encoded(msg["b"])
        if batch.digest() != msg["d"]:
            return
        self.digest_store[msg["d"]] = batch
        slot = self.slots.get(msg["sn"])
        if slot and slot.awaiting_digest and slot.awaiting_digest[1] == msg["d"]:
            self._commit_slot(msg["sn"], slot.awaiting_digest[0], msg["d"], batch)

    def request_catchup(self) -> None:
        missing = [sn for sn in self.seg.seq_nrs if self.slots[sn].committed is None]
        if missing:
            self._bcast(self._msg("cu-req", sns=missing))

    def _on_cu_req(self, src: int, msg: dict) -> None:
        for sn in msg["sns"]:
            slot = self.slots.get(sn)
            if slot is None or slot.committed is None or slot.committed_vd is None:
                continue
            v, d = slot.committed_vd
            sigs = slot.commit_sigs.get((v, d), {})
            if len(sigs) < self.commit_quorum:
                continue
            cert = [[s, sig] for s, sig in sorted(sigs.items())[: self.commit_quorum]]
            resp = self._msg("cu-resp", sn=sn, v=v, d=d,
                             b=slot.committed.encoded(), cert=cert)
            self.sv.send(src, sign_message(self.auth, self.me, resp))

    def _on_cu_resp(self, src: int, msg: dict) -> None:
        sn, v, d = msg["sn"], msg["v"], msg["d"]
        slot = self.slots.get(sn)
        if slot is None or slot.committed is not None:
            return
        batch = Batch.from_encoded(msg["b"])
        if batch.digest() != d:
            return
        payload = codec.encode(self._msg("c", v=v, sn=sn, d=d))
        seen = set()
        for s, sig in msg["cert"]:
            if s in seen or not self.auth.verify(node_identity(s), payload, sig):
                return
            seen.add(s)
        if len(seen) < self.commit_quorum:
            return
        self.digest_store[d] = batch
        self._commit_slot(sn, v, d, batch)
