"""Run metrics from a trace: windowed throughput, end-to-end latency, epoch
durations, and burst structure of the delivery time series.

A request's end-to-end latency runs from its submission to its completion,
i.e. the moment its client held f+1 distinct signed responses.  Throughput
counts completions per one-second window of simulated time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

NS = 1_000_000_000


@dataclass
class Metrics:
    completions: list[int] = field(default_factory=list)  # completion times, sorted
    latencies: dict[tuple, int] = field(default_factory=dict)  # rid -> ns
    windows: list[tuple[int, int, float, float]] = field(default_factory=list)
    epoch_entry: dict[int, int] = field(default_factory=dict)  # epoch -> first entry time
    submitted: int = 0
    completed: int = 0

    @property
    def mean_latency_ns(self) -> float:
        return sum(self.latencies.values()) / len(self.latencies) if self.latencies else 0.0

    @property
    def p95_latency_ns(self) -> float:
        return percentile(list(self.latencies.values()), 95.0)


def percentile(values: list[int], pct: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(0, min(len(ordered) - 1, int(round(pct / 100.0 * len(ordered) + 0.5)) - 1))
    return float(ordered[rank])


def compute(events: list[dict]) -> Metrics:
    m = Metrics()
    submitted_at: dict[tuple, int] = {}
    for e in events:
        kind = e["k"]
        if kind == "sub":
            rid = tuple(e["rid"])
            submitted_at.setdefault(rid, e["t"])
            m.submitted += 1
        elif kind == "cmp":
            rid = tuple(e["rid"])
            if rid in submitted_at and rid not in m.latencies:
                m.latencies[rid] = e["t"] - submitted_at[rid]
                m.completions.append(e["t"])
        elif kind == "ep":
            prev = m.epoch_entry.get(e["e"])
            if prev is None or e["t"] < prev:
                m.epoch_entry[e["e"]] = e["t"]
    m.completions.sort()
    m.completed = len(m.completions)
    m.windows = _windows(m, events)
    return m


def _windows(m: Metrics, events: list[dict]) -> list:
    horizon = events[-1]["t"] if events else 0
    buckets: dict[int, list[int]] = {}
    cmp_by_time: dict[tuple, int] = {}
    for e in events:
        if e["k"] == "cmp":
            cmp_by_time[tuple(e["rid"])] = e["t"]
    for rid, t in cmp_by_time.items():
        buckets.setdefault(t // NS, []).append(m.latencies.get(rid, 0))
    out = []
    for sec in range(horizon // NS + 1):
        lats = buckets.get(sec, [])
        mean = sum(lats) / len(lats) if lats else 0.0
        out.append((sec, len(lats), mean / 1e6, percentile(lats, 95.0) / 1e6))
    return out


def windows_csv(m: Metrics) -> str:
    lines = ["window_start_s,delivered_reqs,mean_latency_ms,p95_latency_ms"]
    for sec, count, mean_ms, p95_ms in m.windows:
        lines.append(f"{sec},{count},{mean_ms:.3f},{p95_ms:.3f}")
    return "\n".join(lines) + "\n"


def peak_sustained(m: Metrics, smooth: int = 3) -> float:
    """Highest delivery rate sustained over `smooth` consecutive seconds."""
    counts = [w[1] for w in m.windows]
    if not counts:
        return 0.0
    if len(counts) < smooth:
        return max(counts)
    best = 0.0
    for i in range(len(counts) - smooth + 1):
        best = max(best, sum(counts[i : i + smooth]) / smooth)
    return best


def epoch_duration(m: Metrics, epoch: int) -> int:
    """Time from first node entering `epoch` to first node entering the
    next recorded epoch."""
    later = [t for e, t in m.epoch_entry.items() if e > epoch]
    if epoch not in m.epoch_entry or not later:
        raise ValueError(f"epoch {epoch} duration not observable")
    return min(later) - m.epoch_entry[epoch]


def burst_gaps(completions: list[int], quiet_gap: int) -> list[int]:
    """Split the completion series into bursts separated by quiet gaps and
    return the intervals between consecutive burst starts."""
    if not completions:
        return []
    starts = [completions[0]]
    last = completions[0]
    for t in completions[1:]:
        if t - last > quiet_gap:
            starts.append(t)
        last = t
    return [b - a for a, b in zip(starts, starts[1:])]
