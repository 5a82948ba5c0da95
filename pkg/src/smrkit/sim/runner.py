"""Scenario execution: builds the actors from a scenario config, runs the
event loop to the horizon, and returns the trace with verdicts and metrics."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .. import checks, metrics
from ..config import ScenarioConfig
from ..crypto import make_authenticator
from ..manager import Behavior
from ..trace import Tracer
from .actors import ClientActor, NodeActor
from .adjudicator import IdealAdjudicator
from .core import RngHub, Scheduler
from .network import Network


@dataclass
class RunResult:
    events: list[dict]
    verdicts: dict
    metrics: metrics.Metrics
    nodes: list[NodeActor]
    clients: list[ClientActor]

    @property
    def clean(self) -> bool:
        return checks.all_pass(self.verdicts)


def behaviors_from_faults(scen: ScenarioConfig) -> dict[int, Behavior]:
    out: dict[int, Behavior] = {}
    for fs in scen.faults:
        b = out.setdefault(fs.node, Behavior())
        if fs.kind == "straggler":
            b.straggler = True
        elif fs.kind == "equivocate":
            b.equivocate = True
        elif fs.kind == "wrong-root":
            b.wrong_root = True
        elif fs.kind == "corrupt-transfer":
            b.corrupt_transfer = True
        elif fs.kind == "crash" and fs.at:
            trigger, epoch = fs.at.split(":")
            if trigger == "epoch-start":
                b.crash_epoch_start = int(epoch)
            else:
                b.crash_epoch_end = int(epoch)
    return out


def run_scenario(scen: ScenarioConfig, seed: int) -> RunResult:
    sched = Scheduler()
    hub = RngHub(seed)
    tracer = Tracer(lambda: sched.now)
    master = hashlib.sha256(f"keys/{seed}".encode()).digest()
    auth = make_authenticator(scen.node.signature_scheme, master)
    net = Network(sched, hub.stream("net"), scen.mean_delay, scen.gst, scen.bandwidth)

    behaviors = behaviors_from_faults(scen)
    faulty = sorted(scen.faulty_nodes())
    correct = set(range(scen.node.n)) - set(faulty)
    adjudicator = None
    if scen.node.orderer == "reference":
        adjudicator = IdealAdjudicator(sched, net, correct, scen.mean_delay)

    tracer.emit(
        "run",
        n=scen.node.n, f=scen.node.f, policy=scen.node.policy,
        orderer=scen.node.orderer, fault_model=scen.node.fault_model,
        epoch_length=scen.node.epoch_length, num_buckets=scen.node.num_buckets,
        leader_count=scen.node.leader_count, max_leaders=scen.node.max_leaders(),
        gst=scen.gst, horizon=scen.horizon, margin=scen.liveness_margin,
        faulty=faulty, partitioned=sorted(scen.partitioned_nodes()),
        clients=scen.clients_count, seed=seed,
    )

    nodes = [
        NodeActor(i, scen.node, scen, auth, sched, net, tracer, hub,
                  scen.clients_count, behavior=behaviors.get(i),
                  adjudicator=adjudicator)
        for i in range(scen.node.n)
    ]
    clients = [
        ClientActor(c, scen.node, scen, auth, sched, net, tracer, hub)
        for c in range(scen.clients_count)
    ]

    for fs in scen.faults:
        if fs.kind == "crash" and fs.at_time is not None:
            node = fs.node

            def kill(node=node):
                tracer.emit("flt", nd=node, what="crash")
                nodes[node].crash()

            sched.schedule(fs.at_time, kill)
        elif fs.kind == "partition":
            net.partition(("n", fs.node), fs.at_time, fs.until_time)
            tracer.emit("flt", nd=fs.node, what="partition",
                        start=fs.at_time, end=fs.until_time)

    for node in nodes:
        sched.schedule(0, node.start)
    for client in clients:
        sched.schedule(0, client.start)

    sched.run_until(scen.horizon)
    tracer.emit("end", at=sched.now)

    verdicts = checks.evaluate(tracer.events)
    return RunResult(
        events=tracer.events,
        verdicts=verdicts,
        metrics=metrics.compute(tracer.events),
        nodes=nodes,
        clients=clients,
    )
