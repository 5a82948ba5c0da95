"""Leader selection.

Policies are pure functions of the shared log prefix, so every correct node
computes the same leaderset for every epoch without communication.  Failure
evidence is log-derived: a leader "failed" in an epoch if one of its slots
committed nil.  The runtime failure detector is a separate mechanism and is
deliberately not consulted here.

* simple    -- all nodes lead every epoch.
* blacklist -- drop the up-to-f nodes with the most recent failures.
* backoff   -- ban offenders for a doubling number of epochs, decaying
               linearly while they behave.
"""

from __future__ import annotations

from .domain import Log, Segment


def last_failure(node: int, segments_history, log: Log) -> int:
    """Highest sequence number the node failed to deliver (its slot
    committed nil), or -1.  ``segments_history`` iterates all segments of
    completed epochs."""
    worst = -1
    for seg in segments_history:
        if seg.leader != node:
            continue
        for sn in seg.seq_nrs:
            batch = log.get(sn)
            if batch is not None and batch.is_nil and sn > worst:
                worst = sn
    return worst


class PolicyState:
    """Incremental fold of per-epoch failure evidence.

    ``observe_epoch`` must be called once per completed epoch, in order;
    ``leaders`` then yields the leaderset for the next epoch.  Rebuilding
    the fold from an installed log (after state transfer) reproduces the
    same leadersets, which is what keeps rejoining nodes consistent.
    """

    def __init__(self, policy: str, n: int, f: int, ban_period: int = 8,
                 penalty_decrease: int = 1, leader_count: int = 0,
                 max_leaders: int = 0):
        if policy not in ("simple", "blacklist", "backoff"):
            raise ValueError(f"policy: unknown value {policy!r}")
        self.policy = policy
        self.n = n
        self.f = f
        self.ban_period = ban_period
        self.penalty_decrease = penalty_decrease
        self.leader_count = leader_count
        self.max_leaders = max_leaders or n
        self.last_failure = [-1] * n
        self.penalty = [0] * n
        self.observed = 0

    def observe_epoch(self, e: int, segments: list[Segment], log: Log) -> None:
        if e != self.observed:
            raise ValueError(f"epochs observed out of order (got {e})")
        self.observed += 1
        failed_now = set()
        for seg in segments:
            for sn in seg.seq_nrs:
                batch = log.get(sn)
                if batch is not None and batch.is_nil:
                    failed_now.add(seg.leader)
                    if sn > self.last_failure[seg.leader]:
                        self.last_failure[seg.leader] = sn
        if self.policy == "backoff":
            for node in range(self.n):
                if node in failed_now:
                    if self.penalty[node] > 0:
                        self.penalty[node] = self.penalty[node] * 2 - 1
                    else:
                        self.penalty[node] = self.ban_period
                elif self.penalty[node] > 0:
                    self.penalty[node] = max(0, self.penalty[node] - self.penalty_decrease)

    def leaders(self, e: int) -> list[int]:
        """Leaderset for epoch e, given everything observed so far.  Sorted;
        may be empty only under the backoff policy."""
        if self.leader_count:
            chosen = list(range(min(self.leader_count, self.n)))
        elif self.policy == "simple":
            chosen = list(range(self.n))
        elif self.policy == "blacklist":
            offenders = sorted(
                (node for node in range(self.n) if self.last_failure[node] >= 0),
                key=lambda node: (self.last_failure[node], node),
                reverse=True,
            )
            excluded = set(offenders[: self.f])
            chosen = [node for node in range(self.n) if node not in excluded]
        else:  # backoff
            chosen = [node for node in range(self.n) if self.penalty[node] <= 0]
        return chosen[: self.max_leaders]
