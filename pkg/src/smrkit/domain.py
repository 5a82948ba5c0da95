"""Core value types: requests, batches, segments, the replicated log, and
the epoch/sequence-number schedule.  No protocol logic lives here."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

from . import codec, crypto


class RequestId(NamedTuple):
    """(timestamp, client) pair; the timestamp is a per-client counter."""

    t: int
    c: int


@dataclass(frozen=True)
class Request:
    payload: bytes
    rid: RequestId
    sig: bytes

    def signing_payload(self) -> bytes:
        return request_signing_payload(self.rid, self.payload)

    def encoded(self) -> list:
        return [self.rid.t, self.rid.c, self.payload, self.sig]

    @staticmethod
    def from_encoded(enc: list) -> "Request":
        t, c, payload, sig = enc
        return Request(payload=payload, rid=RequestId(t, c), sig=sig)


def request_signing_payload(rid: RequestId, payload: bytes) -> bytes:
    return codec.encode(["request", rid.t, rid.c, payload])


@dataclass(frozen=True)
class Batch:
    """Either the nil value (produced only by leader-change fallbacks) or an
    ordered request list.  An *empty* request list is a legal proposal and is
    distinct from nil."""

    requests: Optional[tuple[Request, ...]]

    @staticmethod
    def nil() -> "Batch":
        return _NIL

    @staticmethod
    def of(requests) -> "Batch":
        reqs = tuple(requests)
        ids = [r.rid for r in reqs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate request ids within a batch")
        return Batch(requests=reqs)

    @property
    def is_nil(self) -> bool:
        return self.requests is None

    def __len__(self) -> int:
        return 0 if self.requests is None else len(self.requests)

    def encoded(self):
        if self.requests is None:
            return None
        return [r.encoded() for r in self.requests]

    @staticmethod
    def from_encoded(enc) -> "Batch":
        if enc is None:
            return _NIL
        return Batch(requests=tuple(Request.from_encoded(e) for e in enc))

    def digest(self) -> bytes:
        return crypto.digest(codec.encode(self.encoded()))


_NIL = Batch(requests=None)
NIL_DIGEST = _NIL.digest()


@dataclass(frozen=True)
class Segment:
    """One leader's share of an epoch: its sequence numbers and the buckets
    it may draw requests from."""

    epoch: int
    leader: int
    index: int  # position of the leader in the epoch's sorted leader list
    seq_nrs: tuple[int, ...]
    buckets: frozenset[int]

    @property
    def instance(self) -> str:
        return f"e{self.epoch}/l{self.leader}"

    def __post_init__(self):
        if not self.seq_nrs:
            raise ValueError("segment must own at least one sequence number")


def parse_instance(tag: str) -> tuple[int, int]:
    """Instance tag -> (epoch, leader)."""
    e, l = tag.split("/")
    return int(e[1:]), int(l[1:])


class Log:
    """Sequence number -> committed batch, with strictly in-order delivery.

    ``commit`` is final: re-assigning a position to a different value raises.
    ``advance`` yields one (request, request_seq_nr, batch_sn, index) tuple
    per request of each newly contiguous batch; the request sequence number
    is the request's index plus the running count of previously delivered
    requests.
    """

    def __init__(self):
        self.entries: dict[int, Batch] = {}
        self.first_undelivered = 0
        self.total_delivered = 0

    def committed(self, sn: int) -> bool:
        return sn in self.entries

    def get(self, sn: int) -> Optional[Batch]:
        return self.entries.get(sn)

    def commit(self, sn: int, batch: Batch) -> bool:
        """Returns True if the entry was newly set.  A duplicate commit with
        the same content is a no-op; a conflicting one is fatal."""
        existing = self.entries.get(sn)
        if existing is not None:
            if existing.digest() != batch.digest():
                raise LogConflictError(f"conflicting commit for sn={sn}")
            return False
        self.entries[sn] = batch
        return True

    def advance(self) -> Iterator[tuple[Request, int, int, int]]:
        while self.first_undelivered in self.entries:
            sn = self.first_undelivered
            batch = self.entries[sn]
            if batch.requests:
                for k, req in enumerate(batch.requests):
                    yield req, self.total_delivered, sn, k
                    self.total_delivered += 1
            self.first_undelivered = sn + 1

    def contiguous_length(self) -> int:
        """Length of the committed prefix (first uncommitted sn)."""
        sn = self.first_undelivered
        while sn in self.entries:
            sn += 1
        return sn


class LogConflictError(Exception):
    """A log position was about to be overwritten with a different value."""


@dataclass
class NodeConfig:
    """Per-run protocol parameters shared by every node."""

    n: int
    f: int
    fault_model: str = "byzantine"  # or "crash"
    epoch_length: int = 12
    num_buckets: int = 0  # 0 -> 16 per node
    max_batch_size: int = 4
    batch_rate: float = 32.0  # global batches per second (0 = unlimited)
    min_batch_timeout: int = 0  # ns
    max_batch_timeout: int = 500_000_000  # ns
    epoch_change_timeout: int = 4_000_000_000  # ns
    min_segment_size: int = 1
    policy: str = "blacklist"
    orderer: str = "pbft"
    ban_period: int = 8
    penalty_decrease: int = 1
    in_flight_budget: int = 8
    watermark_width: int = 128
    validate_signatures: bool = True
    signature_scheme: str = "mac"
    leader_count: int = 0  # 0 -> policy decides; else fixed prefix of nodes

    def __post_init__(self):
        if self.num_buckets == 0:
            self.num_buckets = 16 * self.n
        self.validate()

    def validate(self):
        if self.fault_model not in ("byzantine", "crash"):
            raise ValueError(f"faultModel: unknown value {self.fault_model!r}")
        minimum = 3 * self.f + 1 if self.fault_model == "byzantine" else 2 * self.f + 1
        if self.n < minimum:
            raise ValueError(
                f"n: need n >= {minimum} for f={self.f} in {self.fault_model} mode"
            )
        if self.epoch_length < 1:
            raise ValueError("epochLength: must be >= 1")
        if self.num_buckets < 1:
            raise ValueError("numBuckets: must be >= 1")
        if self.max_batch_size < 1:
            raise ValueError("maxBatchSize: must be >= 1")
        if self.leader_count > self.n:
            raise ValueError("leaderCount: cannot exceed n")

    @property
    def strong_quorum(self) -> int:
        """Checkpoint attestation quorum: intersects any two quorums in the
        byzantine case, a plain majority in crash-only mode."""
        if self.fault_model == "byzantine":
            return 2 * self.f + 1
        return self.f + 1

    def max_leaders(self) -> int:
        """Segment-size floor caps how many leaders an epoch can host."""
        return max(1, self.epoch_length // max(1, self.min_segment_size))


class EpochSchedule:
    """Assigns each epoch its contiguous block of sequence numbers.

    Epochs whose leaderset came out empty consume zero sequence numbers; the
    next non-empty epoch continues where the last non-empty one stopped.
    Epochs must be recorded in order as their leader counts become known.
    """

    def __init__(self, epoch_length: int):
        self.epoch_length = epoch_length
        self._first: list[int] = [0]  # first sn of epoch e, len = recorded+1
        self._num_leaders: list[int] = []

    @property
    def recorded(self) -> int:
        return len(self._num_leaders)

    def record_epoch(self, e: int, num_leaders: int) -> None:
        if e != self.recorded:
            raise ValueError(f"epochs must be recorded in order (got {e})")
        self._num_leaders.append(num_leaders)
        width = self.epoch_length if num_leaders > 0 else 0
        self._first.append(self._first[-1] + width)

    def num_leaders(self, e: int) -> int:
        return self._num_leaders[e]

    def seq_nrs(self, e: int) -> range:
        if e >= self.recorded:
            raise ValueError(f"epoch {e} not recorded yet")
        if self._num_leaders[e] == 0:
            return range(0)
        first = self._first[e]
        return range(first, first + self.epoch_length)

    def first_sn(self, e: int) -> int:
        return self._first[e]

    def max_sn(self, e: int) -> int:
        sns = self.seq_nrs(e)
        if not sns:
            raise ValueError(f"epoch {e} is empty")
        return sns[-1]

    def epoch_of(self, sn: int) -> int:
        """Epoch owning a committed-range sequence number."""
        for e in range(self.recorded):
            if self._num_leaders[e] and self._first[e] <= sn < self._first[e + 1]:
                return e
        raise ValueError(f"sn {sn} beyond recorded epochs")


def segment_seq_nrs(epoch_sns: range, leader_index: int, num_leaders: int) -> tuple[int, ...]:
    """Round-robin share of an epoch's sequence numbers for one leader."""
    return tuple(sn for sn in epoch_sns if sn % num_leaders == leader_index)


def seg_of(sn: int, segments) -> Segment:
    """The unique segment containing sn.  Absence is a partitioning bug."""
    for seg in segments:
        if sn in seg.seq_nrs:
            return seg
    raise AssertionError(f"no segment contains sn={sn}")
