"""Crash-fault-tolerant orderer binding: leader-replicated slot log with
randomized elections.

Adaptations for segmented logs: the initial leader is fixed to the segment
leader (no election for term 1); a leader elected later appends nil for
every slot position it lacks, so the segment always completes; after the
segment fills, the leader keeps sending empty appends so lagging followers
finish too.  The election timer window doubles each unsuccessful term,
restoring liveness under eventual synchrony.
"""

from __future__ import annotations

from typing import Optional

from .domain import Batch, Segment


class RaftInstance:
    """One segment's replication group.  services must provide: broadcast,
    send, schedule, now, announce, suspect, trace, rng (random.Random)."""

    def __init__(
        self,
        seg: Segment,
        n: int,
        me: int,
        services,
        election_range: tuple[int, int],
        heartbeat_period: int,
    ):
        self.seg = seg
        self.n = n
        self.me = me
        self.sv = services
        self.majority = n // 2 + 1
        self.slots = seg.seq_nrs
        self.heartbeat_period = heartbeat_period
        self.election_lo, self.election_hi = election_range

        self.term = 1
        self.role = "leader" if me == seg.leader else "follower"
        self.leader_id = seg.leader
        self.voted_for: dict[int, int] = {1: seg.leader}
        self.log: list[tuple[int, Batch]] = []  # (term, batch) per slot index
        self.commit_count = 0
        self.announced = 0
        self.next_index = {p: 0 for p in range(n) if p != me}
        self.match_index = {p: 0 for p in range(n) if p != me}
        self.votes: set[int] = set()
        self.suspected_initial = False
        self.stopped = False
        self._election_gen = 0
        self._hb_gen = 0

    def start(self) -> None:
        if self.role == "leader":
            self._replicate_all()  # establish authority before timers race
            self._arm_heartbeat()
        else:
            self._arm_election()

    def stop(self) -> None:
        self.stopped = True
        self._election_gen += 1
        self._hb_gen += 1

    # -- timers --------------------------------------------------------------

    def _arm_election(self) -> None:
        self._election_gen += 1
        gen = self._election_gen
        delay = self.sv.rng.randrange(self.election_lo, self.election_hi)
        self.sv.schedule(delay, lambda: self._election_fire(gen))

    def _arm_heartbeat(self) -> None:
        self._hb_gen += 1
        gen = self._hb_gen
        self.sv.schedule(self.heartbeat_period, lambda: self._heartbeat_fire(gen))

    def _election_fire(self, gen: int) -> None:
        if gen != self._election_gen or self.stopped or self.role == "leader":
            return
        if self.term == 1 and not self.suspected_initial:
            self.suspected_initial = True
            self.sv.suspect(self.seg.leader)
        # widen the window for the next attempt
        self.election_lo *= 2
        self.election_hi *= 2
        self.term += 1
        self.role = "candidate"
        self.votes = {self.me}
        self.voted_for[self.term] = self.me
        self.sv.trace("vc", inst=self.seg.instance, v=self.term)
        last_idx = len(self.log) - 1
        last_term = self.log[last_idx][0] if self.log else 0
        self.sv.broadcast(self._msg("rv", term=self.term, lli=last_idx, llt=last_term))
        self._arm_election()

    def _heartbeat_fire(self, gen: int) -> None:
        if gen != self._hb_gen or self.stopped or self.role != "leader":
            return
        self._replicate_all()
        self._arm_heartbeat()

    # -- proposing -----------------------------------------------------------

    def can_cast(self) -> bool:
        return (
            self.me == self.seg.leader
            and self.role == "leader"
            and self.term == 1
            and not self.stopped
            and len(self.log) < len(self.slots)
        )

    def cast(self, sn: int, batch: Batch) -> None:
        assert self.can_cast()
        assert self.slots[len(self.log)] == sn, "slots are proposed in order"
        self.log.append((self.term, batch))
        self._replicate_all()

    # -- messages --------------------------------------------------------------

    def _msg(self, ph: str, **fields) -> dict:
        return {"k": "raft", "inst": self.seg.instance, "ph": ph, **fields}

    def handle(self, src: int, msg: dict) -> None:
        if self.stopped:
            return
        ph = msg["ph"]
        if ph == "ae":
            self._on_append(src, msg)
        elif ph == "aer":
            self._on_append_resp(src, msg)
        elif ph == "rv":
            self._on_request_vote(src, msg)
        elif ph == "rvr":
            self._on_vote_resp(src, msg)

    def _step_down(self, term: int) -> None:
        self.term = term
        self.role = "follower"
        self.votes = set()
        self._hb_gen += 1
        self._arm_election()

    def _on_append(self, src: int, msg: dict) -> None:
        if msg["term"] < self.term:
            self.sv.send(src, self._msg("aer", term=self.term, ok=False, mi=len(self.log)))
            return
        if msg["term"] > self.term or self.role != "follower":
            self._step_down(msg["term"])
        self.leader_id = msg["li"]
        self._arm_election()
        pi, pt = msg["pi"], msg["pt"]
        if pi >= 0 and (len(self.log) <= pi or self.log[pi][0] != pt):
            self.sv.send(src, self._msg("aer", term=self.term, ok=False,
                                        mi=min(len(self.log), pi)))
            return
        for idx, term, enc in msg["ent"]:
            batch = Batch.from_encoded(enc)
            if idx < len(self.log):
                if self.log[idx][0] != term:
                    del self.log[idx:]
                    self.log.append((term, batch))
            elif idx == len(self.log):
                self.log.append((term, batch))
        new_commit = min(msg["lc"], len(self.log))
        if new_commit > self.commit_count:
            self.commit_count = new_commit
            self._announce_committed()
        self.sv.send(src, self._msg("aer", term=self.term, ok=True, mi=len(self.log)))

    def _on_append_resp(self, src: int, msg: dict) -> None:
        if msg["term"] > self.term:
            self._step_down(msg["term"])
            return
        if self.role != "leader" or msg["term"] < self.term:
            return
        if msg["ok"]:
            self.match_index[src] = max(self.match_index[src], msg["mi"])
            self.next_index[src] = max(self.next_index[src], msg["mi"])
            self._advance_commit()
        else:
            self.next_index[src] = min(self.next_index[src], msg["mi"])
            self._replicate_to(src)

    def _on_request_vote(self, src: int, msg: dict) -> None:
        if msg["term"] > self.term:
            self._step_down(msg["term"])
        granted = False
        if msg["term"] == self.term and self.voted_for.get(self.term) in (None, src):
            last_idx = len(self.log) - 1
            last_term = self.log[last_idx][0] if self.log else 0
            if (msg["llt"], msg["lli"]) >= (last_term, last_idx):
                granted = True
                self.voted_for[self.term] = src
                self._arm_election()
        self.sv.send(src, self._msg("rvr", term=self.term, granted=granted))

    def _on_vote_resp(self, src: int, msg: dict) -> None:
        if msg["term"] > self.term:
            self._step_down(msg["term"])
            return
        if self.role != "candidate" or msg["term"] != self.term or not msg["granted"]:
            return
        self.votes.add(src)
        if len(self.votes) >= self.majority:
            self.role = "leader"
            self.leader_id = self.me
            self._election_gen += 1
            # Re-stamp the uncommitted tail at our own term (values are kept)
            # so the current-term commit rule can engage; a fixed-length slot
            # array leaves no room for the usual no-op entry.  Then fill any
            # slot the segment leader never got to us with nil.
            self.log = self.log[: self.commit_count] + [
                (self.term, batch) for _t, batch in self.log[self.commit_count:]
            ]
            while len(self.log) < len(self.slots):
                self.log.append((self.term, Batch.nil()))
            for p in self.next_index:
                self.next_index[p] = self.commit_count
                self.match_index[p] = 0
            self._replicate_all()
            self._arm_heartbeat()

    # -- replication ------------------------------------------------------------

    def _replicate_all(self) -> None:
        for p in self.next_index:
            self._replicate_to(p)

    def _replicate_to(self, dst: int) -> None:
        ni = self.next_index[dst]
        pi = ni - 1
        pt = self.log[pi][0] if pi >= 0 else 0
        entries = [
            [idx, self.log[idx][0], self.log[idx][1].encoded()]
            for idx in range(ni, len(self.log))
        ]
        self.sv.send(dst, self._msg("ae", term=self.term, li=self.me, pi=pi, pt=pt,
                                    ent=entries, lc=self.commit_count))

    def _advance_commit(self) -> None:
        for k in range(self.commit_count + 1, len(self.log) + 1):
            replicas = 1 + sum(1 for p in self.match_index if self.match_index[p] >= k)
            if replicas >= self.majority and self.log[k - 1][0] == self.term:
                self.commit_count = k
        self._announce_committed()

    def _announce_committed(self) -> None:
        while self.announced < self.commit_count:
            idx = self.announced
            self.announced += 1
            self.sv.announce(self.slots[idx], self.log[idx][1])

    @property
    def all_committed(self) -> bool:
        return self.announced == len(self.slots)
