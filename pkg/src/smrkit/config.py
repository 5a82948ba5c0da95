"""Scenario configuration: a flat key = value text format.

Example::

    n = 4
    f = 1
    orderer = pbft
    policy = blacklist
    epochLength = 12
    maxBatchSize = 4
    batchRate = 32
    maxBatchTimeout = 500ms
    epochChangeTimeout = 4s
    horizon = 30s
    network.meanDelay = 50ms
    network.gst = 2s
    network.bandwidth = 0
    clients.count = 2
    clients.rate = 50
    clients.payloadSize = 64
    clients.stopAt = 20s
    fault = crash node=2 at=epoch-start:1
    fault = straggler node=3

Durations take ns/us/ms/s suffixes.  Repeated ``fault`` lines accumulate;
everything else is single-valued.  Unknown keys are rejected so typos
surface immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .domain import NodeConfig


class ConfigError(ValueError):
    pass


_DURATION_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}


def parse_duration(text: str, key: str) -> int:
    text = text.strip()
    for unit in ("ns", "us", "ms", "s"):
        if text.endswith(unit):
            number = text[: -len(unit)].strip()
            try:
                return int(float(number) * _DURATION_UNITS[unit])
            except ValueError:
                break
    raise ConfigError(f"{key}: expected a duration like '50ms', got {text!r}")


@dataclass
class FaultSpec:
    kind: str  # crash | straggler | equivocate | wrong-root | corrupt-transfer | partition
    node: int
    at: Optional[str] = None  # "epoch-start:N" | "epoch-end:N" | absolute ns as str
    at_time: Optional[int] = None
    until_time: Optional[int] = None


@dataclass
class ScenarioConfig:
    node: NodeConfig
    horizon: int = 30_000_000_000
    mean_delay: int = 50_000_000
    gst: int = 2_000_000_000
    bandwidth: int = 0  # per-node egress bytes/s; 0 = uncapped
    liveness_margin: int = 0  # 0 -> derived default
    clients_count: int = 1
    client_rate: float = 50.0  # requests per second per client
    payload_size: int = 64
    clients_stop: int = 0  # 0 -> horizon
    preload: int = 0  # requests per client submitted at t=0 instead of a rate
    fd_transport: str = "direct"
    unsafe_commit_quorum: int = 0
    faults: list[FaultSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.clients_stop == 0:
            self.clients_stop = self.horizon
        if self.liveness_margin == 0:
            self.liveness_margin = max(
                4 * self.node.epoch_change_timeout, self.gst + 20 * self.mean_delay
            )
        self.validate_faults()

    def validate_faults(self) -> None:
        crash = [fs for fs in self.faults if fs.kind == "crash"]
        byz = [fs for fs in self.faults if fs.kind in
               ("straggler", "equivocate", "wrong-root", "corrupt-transfer")]
        f = self.node.f
        if len({fs.node for fs in crash}) > f:
            raise ConfigError(f"fault: more than f={f} crash targets")
        if len({fs.node for fs in byz}) > f:
            raise ConfigError(f"fault: more than f={f} byzantine targets")
        if self.node.fault_model == "crash" and byz:
            raise ConfigError("fault: byzantine faults need faultModel = byzantine")
        faulty = {fs.node for fs in crash} | {fs.node for fs in byz}
        if len(faulty) > f:
            raise ConfigError(f"fault: more than f={f} distinct faulty nodes")
        for fs in self.faults:
            if not (0 <= fs.node < self.node.n):
                raise ConfigError(f"fault: node {fs.node} out of range")

    def faulty_nodes(self) -> set[int]:
        return {
            fs.node for fs in self.faults
            if fs.kind in ("crash", "straggler", "equivocate", "wrong-root",
                           "corrupt-transfer")
        }

    def partitioned_nodes(self) -> set[int]:
        return {fs.node for fs in self.faults if fs.kind == "partition"}


_NODE_KEYS = {
    "n": ("n", int),
    "f": ("f", int),
    "faultModel": ("fault_model", str),
    "epochLength": ("epoch_length", int),
    "numBuckets": ("num_buckets", int),
    "bucketsPerLeader": None,  # handled separately
    "maxBatchSize": ("max_batch_size", int),
    "batchRate": ("batch_rate", float),
    "minBatchTimeout": ("min_batch_timeout", "duration"),
    "maxBatchTimeout": ("max_batch_timeout", "duration"),
    "epochChangeTimeout": ("epoch_change_timeout", "duration"),
    "minSegmentSize": ("min_segment_size", int),
    "policy": ("policy", str),
    "orderer": ("orderer", str),
    "banPeriod": ("ban_period", int),
    "penaltyDecrease": ("penalty_decrease", int),
    "inFlightBudget": ("in_flight_budget", int),
    "watermarkWidth": ("watermark_width", int),
    "validateSignatures": ("validate_signatures", bool),
    "signatureScheme": ("signature_scheme", str),
    "leaderCount": ("leader_count", int),
}

_SCENARIO_KEYS = {
    "horizon": ("horizon", "duration"),
    "network.meanDelay": ("mean_delay", "duration"),
    "network.gst": ("gst", "duration"),
    "network.bandwidth": ("bandwidth", int),
    "livenessMargin": ("liveness_margin", "duration"),
    "clients.count": ("clients_count", int),
    "clients.rate": ("client_rate", float),
    "clients.payloadSize": ("payload_size", int),
    "clients.stopAt": ("clients_stop", "duration"),
    "clients.preload": ("preload", int),
    "fdTransport": ("fd_transport", str),
    "unsafe.commitQuorum": ("unsafe_commit_quorum", int),
}


def _convert(key: str, raw: str, typ):
    if typ is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
    if typ is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}")
    if typ is bool:
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if typ == "duration":
        return parse_duration(raw, key)
    return raw


def _parse_fault(raw: str) -> FaultSpec:
    parts = raw.split()
    if not parts:
        raise ConfigError("fault: empty specification")
    kind = parts[0]
    if kind not in ("crash", "straggler", "equivocate", "wrong-root",
                    "corrupt-transfer", "partition"):
        raise ConfigError(f"fault: unknown kind {kind!r}")
    node = None
    at = None
    at_time = None
    until_time = None
    for part in parts[1:]:
        if "=" not in part:
            raise ConfigError(f"fault: bad token {part!r}")
        key, value = part.split("=", 1)
        if key == "node":
            node = int(value)
        elif key == "at":
            if value.startswith("epoch-start:") or value.startswith("epoch-end:"):
                at = value
            else:
                at_time = parse_duration(value, "fault.at")
        elif key == "from":
            at_time = parse_duration(value, "fault.from")
        elif key == "until":
            until_time = parse_duration(value, "fault.until")
        else:
            raise ConfigError(f"fault: unknown token {key!r}")
    if node is None:
        raise ConfigError("fault: missing node=")
    if kind == "partition" and (at_time is None or until_time is None):
        raise ConfigError("fault: partition needs from= and until=")
    if kind == "crash" and at is None and at_time is None:
        raise ConfigError("fault: crash needs at=")
    return FaultSpec(kind=kind, node=node, at=at, at_time=at_time, until_time=until_time)


def parse_scenario(text: str) -> ScenarioConfig:
    node_kw: dict = {}
    scen_kw: dict = {}
    buckets_per_leader = None
    faults: list[FaultSpec] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "fault":
            faults.append(_parse_fault(raw))
        elif key == "bucketsPerLeader":
            buckets_per_leader = _convert(key, raw, int)
        elif key in _NODE_KEYS:
            attr, typ = _NODE_KEYS[key]
            node_kw[attr] = _convert(key, raw, typ)
        elif key in _SCENARIO_KEYS:
            attr, typ = _SCENARIO_KEYS[key]
            scen_kw[attr] = _convert(key, raw, typ)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    for required in ("n", "f"):
        if required not in node_kw:
            raise ConfigError(f"missing required key {required!r}")
    if buckets_per_leader is not None and "num_buckets" not in node_kw:
        node_kw["num_buckets"] = buckets_per_leader * node_kw["n"]
    try:
        node = NodeConfig(**node_kw)
    except ValueError as exc:
        raise ConfigError(str(exc))
    return ScenarioConfig(node=node, faults=faults, **scen_kw)


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
