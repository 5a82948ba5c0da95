"""Client-side protocol: timestamped signed requests, submission targeted
at the leaders currently (and prospectively) serving the request's bucket,
quorum tracking of responses, and resubmission on epoch transitions.

A request is complete once f+1 distinct nodes have signed a response for
it.  Until it knows a bucket assignment, a client falls back to sending to
every node.  An adopted assignment requires f+1 matching announcements, so
at least one comes from a correct node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .buckets import active_buckets, bucket_of
from .crypto import client_identity, node_identity
from .domain import NodeConfig, Request, RequestId, request_signing_payload
from .pbft import verify_message


@dataclass
class _Pending:
    request: Request
    submitted_at: int
    responders: set[int] = field(default_factory=set)


class ClientCore:
    """One client's state machine; the host drives submissions and feeds
    inbound messages."""

    def __init__(self, cfg: NodeConfig, me: int, auth, env):
        self.cfg = cfg
        self.me = me
        self.auth = auth
        self.env = env  # now/send_node/broadcast_nodes/trace/rng
        self.next_t = 0
        self.low = 0  # contiguous completion prefix
        self.completed: set[int] = set()
        self.pending: dict[int, _Pending] = {}  # timestamp -> state
        self.backlog: list[bytes] = []
        self.assignment: Optional[tuple[int, tuple[int, ...]]] = None
        self._announcements: dict[int, dict[tuple, set[int]]] = {}

    # -- submission ------------------------------------------------------------

    def window_free(self) -> bool:
        return self.next_t - self.low < self.cfg.watermark_width

    def submit(self, payload: bytes) -> Optional[RequestId]:
        if not self.window_free():
            self.backlog.append(payload)
            return None
        rid = RequestId(self.next_t, self.me)
        self.next_t += 1
        sig = self.auth.sign(client_identity(self.me), request_signing_payload(rid, payload))
        req = Request(payload=payload, rid=rid, sig=sig)
        self.pending[rid.t] = _Pending(request=req, submitted_at=self.env.now())
        dests = self._targets(rid)
        self.env.trace("sub", rid=[rid.t, rid.c], dests=sorted(dests))
        self._send_request(req, dests)
        return rid

    def _targets(self, rid: RequestId) -> set[int]:
        """Current bucket owner plus the projected owners for the next two
        epochs (projected with an unchanged leaderset); all nodes when no
        assignment is known yet."""
        if self.assignment is None:
            return set(range(self.cfg.n))
        epoch, leaders = self.assignment
        bucket = bucket_of(rid, self.cfg.num_buckets)
        dests = set()
        for e in (epoch, epoch + 1, epoch + 2):
            for leader in leaders:
                if bucket in active_buckets(e, list(leaders), leader, self.cfg.n,
                                            self.cfg.num_buckets):
                    dests.add(leader)
                    break
        return dests

    def _send_request(self, req: Request, dests) -> None:
        msg = {"k": "req", "r": req.encoded(), "src": self.me}
        for dst in sorted(dests):
            self.env.send_node(dst, msg)

    # -- inbound ----------------------------------------------------------------

    def on_message(self, msg: dict) -> None:
        kind = msg.get("k")
        if kind == "resp":
            self._on_response(msg)
        elif kind == "assign":
            self._on_assignment(msg)

    def _on_response(self, msg: dict) -> None:
        if not verify_message(self.auth, msg):
            return
        t, c = msg["rid"]
        if c != self.me or t not in self.pending:
            return
        entry = self.pending[t]
        entry.responders.add(msg["src"])
        if len(entry.responders) >= self.cfg.f + 1:
            del self.pending[t]
            self.completed.add(t)
            while self.low in self.completed:
                self.completed.discard(self.low)
                self.low += 1
            self.env.trace("cmp", rid=[t, c])
            self._drain_backlog()

    def _drain_backlog(self) -> None:
        while self.backlog and self.window_free():
            self.submit(self.backlog.pop(0))

    def _on_assignment(self, msg: dict) -> None:
        if not verify_message(self.auth, msg):
            return
        src = msg["src"]
        if not isinstance(src, int) or not (0 <= src < self.cfg.n):
            return
        epoch = msg["e"]
        key = tuple(msg["leaders"])
        voters = self._announcements.setdefault(epoch, {}).setdefault(key, set())
        voters.add(src)
        if len(voters) < self.cfg.f + 1:
            return
        if self.assignment is not None and self.assignment[0] >= epoch:
            return
        self.assignment = (epoch, key)
        self._announcements = {e: v for e, v in self._announcements.items() if e > epoch}
        self.env.trace("adopt", e=epoch)
        for t in sorted(self.pending):
            entry = self.pending[t]
            self._send_request(entry.request, self._targets(entry.request.rid))
