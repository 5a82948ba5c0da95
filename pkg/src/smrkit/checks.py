"""Trace verification: replays the safety and liveness properties against a
recorded event stream and reports one verdict per property.

Safety properties are always evaluated.  Liveness-flavored properties need
a long-enough run: the trace must carry its end marker and extend past the
stabilization time plus the configured margin, otherwise they report
NOT_EVALUABLE.  Verification is pure, so verifying a written trace gives
exactly the in-run verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .buckets import active_buckets
from .domain import parse_instance

PASS = "PASS"
FAIL = "FAIL"
NOT_EVALUABLE = "NOT_EVALUABLE"

SAFETY = [
    "sb1-integrity", "sb2-agreement", "sb4-progress",
    "smr1-integrity", "smr2-agreement", "no-duplication",
    "epoch-barrier", "bucket-partition", "blacklist-bound", "log-monotonic",
]
LIVENESS = ["sb3-termination", "smr3-totality", "smr4-liveness"]


@dataclass
class Verdict:
    status: str
    detail: str = ""


def _verdict(ok: bool, detail: str = "") -> Verdict:
    return Verdict(PASS if ok else FAIL, detail if not ok else "")


def evaluate(events: list[dict]) -> dict[str, Verdict]:
    meta = next((e for e in events if e["k"] == "run"), None)
    if meta is None:
        return {"trace": Verdict(FAIL, "missing run header")}
    end = next((e for e in events if e["k"] == "end"), None)
    n, f = meta["n"], meta["f"]
    faulty = set(meta.get("faulty", []))
    correct = set(range(n)) - faulty
    margin = meta.get("margin", 0)
    end_time = end["t"] if end else None
    evaluable = end is not None and end_time - margin > meta.get("gst", 0)
    cutoff = (end_time - margin) if evaluable else None

    by_kind: dict[str, list[dict]] = {}
    for e in events:
        by_kind.setdefault(e["k"], []).append(e)

    out: dict[str, Verdict] = {}
    out["sb1-integrity"] = _check_sb1(by_kind, correct)
    out["sb2-agreement"] = _check_sb2(by_kind, correct)
    out["sb4-progress"] = _check_sb4(by_kind, correct)
    out["log-monotonic"] = _check_log_monotonic(by_kind, correct)
    has_smr = bool(by_kind.get("smr") or by_kind.get("sub") or by_kind.get("ep"))
    if has_smr:
        out["smr1-integrity"] = _check_smr1(by_kind, correct)
        out["smr2-agreement"] = _check_smr2(by_kind, correct)
        out["no-duplication"] = _check_no_dup(by_kind, correct)
        out["epoch-barrier"] = _check_epoch_barrier(by_kind, meta, correct)
        out["bucket-partition"] = _check_bucket_partition(by_kind, meta, correct)
        out["blacklist-bound"] = _check_blacklist_bound(by_kind, meta)
    if not evaluable:
        out["sb3-termination"] = Verdict(NOT_EVALUABLE, "run too short")
        if has_smr:
            out["smr3-totality"] = Verdict(NOT_EVALUABLE, "run too short")
            out["smr4-liveness"] = Verdict(NOT_EVALUABLE, "run too short")
        return out
    out["sb3-termination"] = _check_sb3(by_kind, correct, cutoff)
    if has_smr:
        out["smr3-totality"] = _check_smr3(by_kind, correct, cutoff)
        out["smr4-liveness"] = _check_smr4(by_kind, cutoff)
    return out


def all_pass(verdicts: dict[str, Verdict]) -> bool:
    return all(v.status != FAIL for v in verdicts.values())


# -- sequenced-broadcast properties ------------------------------------------------


def _deliveries(by_kind, correct):
    """(node, inst, sn, digest, nil, t) from both instance deliveries and
    log commits; commits cover entries installed via state transfer."""
    for e in by_kind.get("dlv", []):
        if e["nd"] in correct:
            yield e["nd"], e["inst"], e["sn"], e["d"], e.get("nil", False), e["t"]
    for e in by_kind.get("commit", []):
        if e["nd"] in correct:
            yield e["nd"], e["inst"], e["sn"], e["d"], e.get("nil", False), e["t"]


def _check_sb1(by_kind, correct) -> Verdict:
    casts = {(e["nd"], e["inst"], e["sn"], e["d"]) for e in by_kind.get("cast", [])}
    for nd, inst, sn, d, nil, _t in _deliveries(by_kind, correct):
        if nil:
            continue
        _epoch, sigma = parse_instance(inst)
        if sigma not in correct:
            continue
        if (sigma, inst, sn, d) not in casts:
            return _verdict(False, f"({inst}, sn={sn}) delivered without a cast at node {nd}")
    return _verdict(True)


def _check_sb2(by_kind, correct) -> Verdict:
    seen: dict[tuple, bytes] = {}
    for nd, inst, sn, d, _nil, _t in _deliveries(by_kind, correct):
        key = (inst, sn)
        if key in seen and seen[key] != d:
            return _verdict(False, f"conflicting values at ({inst}, sn={sn})")
        seen[key] = d
    return _verdict(True)


def _check_sb3(by_kind, correct, cutoff) -> Verdict:
    inits: dict[tuple, int] = {}
    slot_sets: dict[str, tuple] = {}
    for e in by_kind.get("init", []):
        if e["nd"] in correct:
            inits[(e["nd"], e["inst"])] = e["t"]
            slot_sets[e["inst"]] = tuple(e["sns"])
    got: set[tuple] = set()
    for nd, inst, sn, _d, _nil, _t in _deliveries(by_kind, correct):
        got.add((nd, inst, sn))
        got.add((nd, sn))  # commits satisfy the slot regardless of instance
    for (nd, inst), t0 in inits.items():
        if cutoff is not None and t0 > cutoff:
            continue
        for sn in slot_sets[inst]:
            if (nd, inst, sn) not in got and (nd, sn) not in got:
                return _verdict(False, f"node {nd} never resolved ({inst}, sn={sn})")
    return _verdict(True)


def _check_sb4(by_kind, correct) -> Verdict:
    inits: dict[tuple, int] = {}
    for e in by_kind.get("init", []):
        if e["nd"] in correct:
            inits[(e["nd"], e["inst"])] = e["t"]
    suspects = [(e["nd"], e["p"], e["t"]) for e in by_kind.get("sus", []) if e["nd"] in correct]
    for nd, inst, sn, _d, nil, _t in _deliveries(by_kind, correct):
        if not nil:
            continue
        _epoch, sigma = parse_instance(inst)
        ok = any(
            p == sigma and (q, inst) in inits and t >= inits[(q, inst)]
            for q, p, t in suspects
        )
        if not ok:
            return _verdict(False, f"nil at ({inst}, sn={sn}) without a matching suspicion")
    return _verdict(True)


def _check_log_monotonic(by_kind, correct) -> Verdict:
    seen: dict[tuple, bytes] = {}
    for e in by_kind.get("commit", []):
        key = (e["nd"], e["sn"])
        if key in seen and seen[key] != e["d"]:
            return _verdict(False, f"node {e['nd']} rewrote sn={e['sn']}")
        seen[key] = e["d"]
    for e in by_kind.get("div", []):
        if e["nd"] in correct:
            return _verdict(False, f"checkpoint divergence at epoch {e['e']}")
    return _verdict(True)


# -- replicated-log properties ---------------------------------------------------------


def _check_smr1(by_kind, correct) -> Verdict:
    submitted = {tuple(e["rid"]) for e in by_kind.get("sub", [])}
    for e in by_kind.get("smr", []):
        if e["nd"] in correct and tuple(e["rid"]) not in submitted:
            return _verdict(False, f"delivered unsubmitted request {e['rid']}")
    return _verdict(True)


def _check_smr2(by_kind, correct) -> Verdict:
    seen: dict[int, tuple] = {}
    for e in by_kind.get("smr", []):
        if e["nd"] not in correct:
            continue
        rid = tuple(e["rid"])
        if e["snr"] in seen and seen[e["snr"]] != rid:
            return _verdict(False, f"position {e['snr']} holds two requests")
        seen[e["snr"]] = rid
    return _verdict(True)


def _check_no_dup(by_kind, correct) -> Verdict:
    seen: set[tuple] = set()
    for e in by_kind.get("smr", []):
        if e["nd"] not in correct:
            continue
        key = (e["nd"], tuple(e["rid"]))
        if key in seen:
            return _verdict(False, f"node {e['nd']} delivered {e['rid']} twice")
        seen.add(key)
    return _verdict(True)


def _check_smr3(by_kind, correct, cutoff) -> Verdict:
    per_node: dict[int, set] = {nd: set() for nd in correct}
    early: set[tuple] = set()
    for e in by_kind.get("smr", []):
        if e["nd"] in correct:
            item = (e["snr"], tuple(e["rid"]))
            per_node[e["nd"]].add(item)
            if e["t"] <= cutoff:
                early.add(item)
    for item in early:
        for nd in correct:
            if item not in per_node[nd]:
                return _verdict(False, f"node {nd} missing delivery {item[0]}")
    return _verdict(True)


def _check_smr4(by_kind, cutoff) -> Verdict:
    completed = {tuple(e["rid"]) for e in by_kind.get("cmp", [])}
    for e in by_kind.get("sub", []):
        if e["t"] <= cutoff and tuple(e["rid"]) not in completed:
            return _verdict(False, f"request {e['rid']} never completed")
    return _verdict(True)


def _check_epoch_barrier(by_kind, meta, correct) -> Verdict:
    epoch_length = meta["epoch_length"]
    spans: dict[tuple, range] = {}  # (node, epoch) -> sns
    order: dict[int, list[int]] = {}
    for e in by_kind.get("ep", []):
        spans[(e["nd"], e["e"])] = range(e["first"], e["first"] + epoch_length)
        order.setdefault(e["nd"], []).append(e["e"])
    committed: dict[int, set] = {}
    for event in sorted(
        (e for e in by_kind.get("commit", []) + by_kind.get("cast", [])),
        key=lambda e: e["q"],
    ):
        nd = event["nd"]
        if event["k"] == "commit":
            committed.setdefault(nd, set()).add(event["sn"])
            continue
        if nd not in correct:
            continue
        epoch, _sigma = parse_instance(event["inst"])
        prior = [x for x in order.get(nd, []) if x < epoch]
        if not prior:
            continue
        prev = max(prior)
        missing = [sn for sn in spans[(nd, prev)] if sn not in committed.get(nd, ())]
        if missing:
            return _verdict(
                False, f"node {nd} proposed in epoch {epoch} before sn={missing[0]}"
            )
    return _verdict(True)


def _check_bucket_partition(by_kind, meta, correct) -> Verdict:
    n, num_buckets = meta["n"], meta["num_buckets"]
    leaders_of: dict[tuple, list[int]] = {}
    for e in by_kind.get("ep", []):
        key = (e["nd"], e["e"])
        leaders = list(e["leaders"])
        leaders_of[key] = leaders
        union = set()
        total = 0
        for leader in leaders:
            mine = active_buckets(e["e"], leaders, leader, n, num_buckets)
            union |= mine
            total += len(mine)
        if total != num_buckets or union != set(range(num_buckets)):
            return _verdict(False, f"epoch {e['e']}: buckets do not partition")
    for e in by_kind.get("commit", []):
        if e["nd"] not in correct or e.get("nil") or not e.get("rids"):
            continue
        epoch, sigma = parse_instance(e["inst"])
        leaders = leaders_of.get((e["nd"], epoch))
        if leaders is None or sigma not in leaders:
            continue
        allowed = active_buckets(epoch, leaders, sigma, n, num_buckets)
        for t, c in e["rids"]:
            if ((c << 64) | t) % num_buckets not in allowed:
                return _verdict(
                    False, f"({e['inst']}, sn={e['sn']}) holds a foreign-bucket request"
                )
    return _verdict(True)


def _check_blacklist_bound(by_kind, meta) -> Verdict:
    if meta.get("policy") != "blacklist" or meta.get("leader_count"):
        return Verdict(PASS, "")
    bound = meta["n"] - meta["f"]
    capped = meta.get("max_leaders", meta["n"])
    for e in by_kind.get("ep", []):
        if len(e["leaders"]) < min(bound, capped):
            return _verdict(False, f"epoch {e['e']} has {len(e['leaders'])} leaders")
    return _verdict(True)
