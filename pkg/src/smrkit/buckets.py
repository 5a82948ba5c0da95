"""Request-space partitioning.

Requests hash to numbered buckets by their identifier alone (payload is
excluded so clients cannot bias placement).  Each epoch assigns every bucket
to exactly one leader: an initial round-robin over all nodes, then the
leftover buckets of non-leaders re-distributed round-robin over the actual
leaders.  Rotating the assignment with the epoch number guarantees every
node eventually serves every bucket.
"""

from __future__ import annotations

import heapq
from typing import Iterable, Optional

from .domain import Batch, Request, RequestId


def bucket_of(rid: RequestId, num_buckets: int) -> int:
    """Bucket number for a request id: the 128-bit big-endian concatenation
    of client and timestamp, reduced mod the bucket count."""
    return ((rid.c << 64) | rid.t) % num_buckets


def init_buckets(e: int, i: int, n: int, num_buckets: int) -> frozenset[int]:
    """Buckets initially assigned to node i in epoch e: (b + e) == i mod n."""
    return frozenset(b for b in range(num_buckets) if (b + e) % n == i)


def extra_buckets(e: int, leaders: Iterable[int], n: int, num_buckets: int) -> frozenset[int]:
    """Buckets whose initial assignee is not a leader this epoch."""
    leader_set = set(leaders)
    return frozenset(
        b for b in range(num_buckets) if (b + e) % n not in leader_set
    )


def active_buckets(
    e: int, leaders: list[int], i: int, n: int, num_buckets: int
) -> frozenset[int]:
    """Buckets leader i actually serves in epoch e: its initial share plus
    its round-robin slice of the non-leaders' buckets.  ``leaders`` must be
    sorted; results over all leaders partition the bucket space."""
    k = leaders.index(i)
    num_leaders = len(leaders)
    extra = extra_buckets(e, leaders, n, num_buckets)
    own = init_buckets(e, i, n, num_buckets)
    return own | frozenset(b for b in extra if (b + e) % num_leaders == k)


class BucketQueue:
    """FIFO queue of pending requests for one bucket.

    Adds are idempotent per request id.  Order is by original reception
    number, which survives resurrection: a request re-added after an
    unsuccessful proposal goes back to its original position.
    """

    def __init__(self, bucket: int):
        self.bucket = bucket
        self._items: dict[RequestId, tuple[int, Request]] = {}

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, rid: RequestId) -> bool:
        return rid in self._items

    def add(self, req: Request, recno: int) -> bool:
        if req.rid in self._items:
            return False
        self._items[req.rid] = (recno, req)
        return True

    def remove(self, rid: RequestId) -> None:
        self._items.pop(rid, None)

    def items(self):
        return self._items.values()

    def oldest(self) -> Optional[int]:
        return min((recno for recno, _ in self._items.values()), default=None)


class RequestPool:
    """All bucket queues of one node, plus the reception-number stamp.

    Reception numbers are remembered for every id ever accepted, which makes
    re-reception a no-op and lets resurrection restore original order.
    """

    def __init__(self, num_buckets: int):
        self.num_buckets = num_buckets
        self.queues = [BucketQueue(b) for b in range(num_buckets)]
        self._recno: dict[RequestId, int] = {}
        self._next_recno = 0

    def recno_of(self, rid: RequestId) -> Optional[int]:
        return self._recno.get(rid)

    def add(self, req: Request) -> bool:
        """First reception stamps and enqueues; repeats are no-ops."""
        if req.rid in self._recno:
            return False
        recno = self._next_recno
        self._next_recno += 1
        self._recno[req.rid] = recno
        self.queues[bucket_of(req.rid, self.num_buckets)].add(req, recno)
        return True

    def remove(self, rid: RequestId) -> None:
        self.queues[bucket_of(rid, self.num_buckets)].remove(rid)

    def pending_count(self, buckets: Iterable[int]) -> int:
        return sum(len(self.queues[b]) for b in buckets)

    def cut_batch(self, buckets: Iterable[int], max_batch_size: int) -> Batch:
        """Up to max_batch_size globally oldest requests across the given
        queues, removed from them.  May be empty."""
        candidates = heapq.nsmallest(
            max_batch_size,
            (
                (recno, req)
                for b in buckets
                for recno, req in self.queues[b].items()
            ),
        )
        for _, req in candidates:
            self.remove(req.rid)
        return Batch.of(req for _, req in candidates)

    def resurrect(self, batch: Batch, delivered) -> int:
        """Return an unsuccessfully proposed batch's requests to their
        queues at their original positions, skipping any committed since.
        ``delivered`` is a container of delivered RequestIds."""
        if not batch.requests:
            return 0
        restored = 0
        for req in batch.requests:
            if req.rid in delivered:
                continue
            recno = self._recno.get(req.rid)
            if recno is None:
                continue
            if self.queues[bucket_of(req.rid, self.num_buckets)].add(req, recno):
                restored += 1
        return restored

    def forget(self, rid: RequestId) -> None:
        """Drop the reception stamp once the id can never legally reappear
        (its client watermark window has passed it)."""
        self._recno.pop(rid, None)
