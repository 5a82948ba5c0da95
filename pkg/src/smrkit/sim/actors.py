"""Simulation actors: hosts that wire the protocol cores to the scheduler,
network, tracer, and fault plumbing."""

from __future__ import annotations

from ..client import ClientCore
from ..domain import NodeConfig
from ..manager import Behavior, ReplicaCore
from ..pbft import verify_message


class NodeActor:
    """One replica: owns a ReplicaCore and implements its env surface."""

    def __init__(self, node_id: int, cfg: NodeConfig, scen, auth, sched, net,
                 tracer, rng_hub, clients_count: int,
                 behavior: Behavior = None, adjudicator=None):
        self.me = node_id
        self.addr = ("n", node_id)
        self.sched = sched
        self.net = net
        self.tracer = tracer
        self.rng_hub = rng_hub
        self.adjudicator = adjudicator
        self.mean_delay = scen.mean_delay
        self.crashed = False
        self.cfg = cfg
        self.core = ReplicaCore(
            cfg, node_id, auth, self, clients_count,
            behavior=behavior,
            fd_transport=scen.fd_transport,
            heartbeat_period=scen.mean_delay,
            fd_initial_timeout=4 * scen.mean_delay,
        )
        self.core.unsafe_commit_quorum = scen.unsafe_commit_quorum or None
        net.register(self.addr, self.on_net)
        if adjudicator is not None:
            adjudicator.attach(node_id, self._on_decide)

    # env surface ------------------------------------------------------------

    def now(self) -> int:
        return self.sched.now

    def schedule(self, delay: int, cb) -> None:
        def guarded():
            if not self.crashed:
                cb()

        self.sched.schedule(delay, guarded)

    def send(self, dst: int, msg: dict) -> None:
        if not self.crashed:
            self.net.send(self.addr, ("n", dst), msg)

    def broadcast(self, msg: dict) -> None:
        for p in range(self.cfg.n):
            if p != self.me:
                self.send(p, msg)

    def send_client(self, client: int, msg: dict) -> None:
        if not self.crashed:
            self.net.send(self.addr, ("c", client), msg)

    def trace(self, kind: str, **fields) -> None:
        self.tracer.emit(kind, nd=self.me, **fields)

    def rng(self, name: str):
        return self.rng_hub.stream(name)

    def crash_self(self) -> None:
        self.crash()

    # host plumbing -------------------------------------------------------------

    def crash(self) -> None:
        if not self.crashed:
            self.crashed = True
            self.net.crash(self.addr)

    def start(self) -> None:
        if not self.crashed:
            self.core.start()

    def _on_decide(self, inst: str, sn: int, value) -> None:
        if not self.crashed:
            self.core.on_bc_decide(inst, sn, value)

    def on_net(self, src_addr, msg: dict) -> None:
        if self.crashed:
            return
        if src_addr[0] == "c":
            if msg.get("k") == "req":
                self.core.on_message(-1, msg)
            return
        src = src_addr[1]
        if "sig" in msg and (msg.get("src") != src or not verify_message(self.core.auth, msg)):
            return
        self.core.on_message(src, msg)


class ClientActor:
    """One client: submits a seeded workload and tracks completions."""

    def __init__(self, client_id: int, cfg: NodeConfig, scen, auth, sched, net,
                 tracer, rng_hub):
        self.me = client_id
        self.addr = ("c", client_id)
        self.sched = sched
        self.net = net
        self.tracer = tracer
        self.scen = scen
        self.rng = rng_hub.stream(f"client/{client_id}")
        self.core = ClientCore(cfg, client_id, auth, self)
        net.register(self.addr, self.on_net)

    # env surface ------------------------------------------------------------

    def now(self) -> int:
        return self.sched.now

    def send_node(self, node: int, msg: dict) -> None:
        self.net.send(self.addr, ("n", node), msg)

    def trace(self, kind: str, **fields) -> None:
        self.tracer.emit(kind, cl=self.me, **fields)

    # workload ---------------------------------------------------------------

    def start(self) -> None:
        if self.scen.preload:
            for _ in range(self.scen.preload):
                self.core.submit(self.rng.randbytes(self.scen.payload_size))
        elif self.scen.client_rate > 0:
            self._submit_loop()

    def _submit_loop(self) -> None:
        if self.sched.now >= self.scen.clients_stop:
            return
        self.core.submit(self.rng.randbytes(self.scen.payload_size))
        interval = 1_000_000_000 / self.scen.client_rate
        self.sched.schedule(int(interval * self.rng.uniform(0.8, 1.2)), self._submit_loop)

    def on_net(self, src_addr, msg: dict) -> None:
        if src_addr[0] == "n":
            self.core.on_message(msg)
