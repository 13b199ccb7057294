"""Deterministic discrete-event network simulator.

Links are pure delay lines (integer milliseconds, no queuing). Events are
totally ordered by ``(time, seq)`` where ``seq`` is assigned when the event is
scheduled, so events due at the same instant run in FIFO order. Packets cross
links in their TLV wire encoding.

The trace is one tab-separated line per record:

    time  node  kind  packet-type  name  face  extra

``extra`` is ``key=value`` pairs joined by commas in sorted key order, or
``-``. The run digest is the 64-bit BLAKE2b of the trace text.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable

from .actions import Note, Send, Timer, face_label
from .agent import Agent
from .controller import CONTROLLER_ID, Controller
from .errors import TimeTravel
from .names import ServiceChart
from .packets import decode_packet, encode_packet, packet_kind
from .placement import Weights

TRACE_VERSION = 1
METRICS_VERSION = 1


@dataclass(frozen=True)
class NodeSpec:
    id: str
    battery: int = 100
    storage: int = 0
    compute: int = 0
    controller_face: int | None = None


@dataclass(frozen=True)
class Link:
    a: str
    a_face: int
    b: str
    b_face: int
    delay: int
    loss: float = 0.0


@dataclass(frozen=True)
class DataItem:
    name: str
    agent: str
    payload: bytes
    freshness: int | None = None


@dataclass(frozen=True)
class ControllerAttachment:
    agent: str
    face: int
    delay: int = 1


@dataclass
class Topology:
    nodes: list[NodeSpec]
    links: list[Link] = field(default_factory=list)
    data_items: list[DataItem] = field(default_factory=list)
    controller: ControllerAttachment | None = None

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def max_delay(self) -> int:
        delays = [l.delay for l in self.links]
        if self.controller is not None:
            delays.append(self.controller.delay)
        return max(delays, default=0)

    def problems(self) -> list[str]:
        """Every structural problem, each as ``"<path>: <message>"``."""
        out = []
        ids = self.node_ids()
        for dup in sorted(k for k, v in Counter(ids).items() if v > 1):
            out.append(f"nodes: duplicate node id {dup!r}")
        known = set(ids)
        used: Counter = Counter()
        for i, l in enumerate(self.links):
            for end in (l.a, l.b):
                if end not in known:
                    out.append(f"links.{i}: unknown agent {end!r}")
            if l.delay < 0:
                out.append(f"links.{i}: negative delay")
            if not 0.0 <= l.loss <= 1.0:
                out.append(f"links.{i}: loss must be within [0, 1]")
            if l.a == l.b:
                out.append(f"links.{i}: self loop on {l.a!r}")
            used[(l.a, l.a_face)] += 1
            used[(l.b, l.b_face)] += 1
        if self.controller is not None:
            if self.controller.agent not in known:
                out.append(f"controller: unknown attachment agent {self.controller.agent!r}")
            used[(self.controller.agent, self.controller.face)] += 1
        for (agent, face), n in sorted(used.items()):
            if n > 1:
                out.append(f"links: face {face} of agent {agent!r} used {n} times")
        for i, d in enumerate(self.data_items):
            if d.agent not in known:
                out.append(f"data.{i}: unknown agent {d.agent!r}")
        return out


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: str = field(compare=False)
    node: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    node: str
    kind: str
    ptype: str = "-"
    name: str = "-"
    face: str = "-"
    extra: tuple[tuple[str, str], ...] = ()

    def line(self) -> str:
        extra = ",".join(f"{k}={v}" for k, v in self.extra) or "-"
        return "\t".join((str(self.time), self.node, self.kind, self.ptype, self.name, self.face, extra))

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        time, node, kind, ptype, name, face, extra = line.rstrip("\n").split("\t")
        pairs = () if extra == "-" else tuple(tuple(kv.split("=", 1)) for kv in extra.split(","))
        return cls(int(time), node, kind, ptype, name, face, pairs)

    def get(self, key: str, default=None):
        return dict(self.extra).get(key, default)


def trace_text(trace: Iterable[TraceRecord]) -> str:
    return "".join(r.line() + "\n" for r in trace)


def trace_digest(trace: Iterable[TraceRecord]) -> str:
    return hashlib.blake2b(trace_text(trace).encode(), digest_size=8).hexdigest()


def _extra(d: dict) -> tuple[tuple[str, str], ...]:
    return tuple(sorted((str(k), str(v)) for k, v in d.items()))


def default_pit_lifetime(topology: Topology, charts: Iterable[ServiceChart]) -> int:
    work = sum(ms.exec_time for c in charts for ms in c.microservices())
    return 4 * topology.max_delay() * max(1, len(topology.nodes)) + work


class Simulator:
    def __init__(
        self,
        topology: Topology,
        *,
        seed: int = 0,
        horizon: int | None = None,
        charts: Iterable[ServiceChart] = (),
        weights: Weights = Weights(),
        monitor_period: int | None = 1000,
        round_timeout: int = 500,
        pit_lifetime: int | None = None,
        controller_faces: dict[str, int] | None = None,
    ):
        self.topology = topology
        self.seed = seed
        self.horizon = horizon
        self.monitor_period = monitor_period
        self.now = 0
        self.trace: list[TraceRecord] = []
        self._queue: list[Event] = []
        self._seq = 0
        self._loss_rng = random.Random(f"{seed}:loss")
        self.sent: Counter = Counter()
        self.drops: Counter = Counter()
        self.delivered = 0

        charts = list(charts)
        if pit_lifetime is None:
            pit_lifetime = default_pit_lifetime(topology, charts)
        self.ports: dict[tuple[str, int], tuple[str, int, int, float]] = {}
        faces: dict[str, dict[int, tuple[str, int]]] = {n.id: {} for n in topology.nodes}
        for l in topology.links:
            self.ports[(l.a, l.a_face)] = (l.b, l.b_face, l.delay, l.loss)
            self.ports[(l.b, l.b_face)] = (l.a, l.a_face, l.delay, l.loss)
            faces[l.a][l.a_face] = (l.b, l.delay)
            faces[l.b][l.b_face] = (l.a, l.delay)

        data: dict[str, list] = {n.id: [] for n in topology.nodes}
        for d in topology.data_items:
            data[d.agent].append((d.name, d.payload, d.freshness))

        controller_faces = dict(controller_faces or {})
        att = topology.controller
        if att is not None:
            controller_faces[att.agent] = att.face
        # consumers know a head's declared exec time, not where it runs
        hints = {c.label: c.head.exec_time for c in charts}

        self.nodes: dict[str, Any] = {}
        for n in topology.nodes:
            cface = n.controller_face if n.controller_face is not None else controller_faces.get(n.id)
            self.nodes[n.id] = Agent(
                n.id, faces[n.id],
                battery=n.battery, storage_total=n.storage, compute_total=n.compute,
                data_items=data[n.id], controller_face=cface,
                pit_lifetime=pit_lifetime, monitor_lifetime=round_timeout,
                rng=random.Random(f"{seed}:{n.id}"), exec_time_hints=hints,
            )

        self.controller: Controller | None = None
        if att is not None:
            self.controller = Controller(att.agent, 0, weights=weights,
                                         monitor_period=monitor_period or 0,
                                         round_timeout=round_timeout,
                                         rng=random.Random(f"{seed}:{CONTROLLER_ID}"))
            for c in charts:
                self.controller.register_chart(c)
            self.nodes[CONTROLLER_ID] = self.controller
            self.ports[(CONTROLLER_ID, 0)] = (att.agent, att.face, att.delay, 0.0)
            self.ports[(att.agent, att.face)] = (CONTROLLER_ID, 0, att.delay, 0.0)
            if monitor_period:
                self.schedule(Event(0, 0, "monitor_tick", CONTROLLER_ID))

    # -- scheduling ----------------------------------------------------------

    def schedule(self, e: Event) -> Event:
        if e.time < self.now:
            raise TimeTravel(f"event at {e.time} scheduled at {self.now}")
        self._seq += 1
        e.seq = self._seq
        heapq.heappush(self._queue, e)
        return e

    def at(self, time: int, kind: str, node: str, payload=None) -> Event:
        return self.schedule(Event(time, 0, kind, node, payload))

    def request(self, time: int, agent: str, head: str, executiontime: int) -> Event:
        return self.at(time, "local_request", agent, (head, executiontime))

    def _record(self, node: str, kind: str, ptype="-", name="-", face=None, extra=None) -> None:
        self.trace.append(TraceRecord(self.now, node, kind, ptype, str(name), face_label(face),
                                      _extra(extra or {})))

    # -- execution -----------------------------------------------------------

    def _apply(self, node: str, actions) -> None:
        for act in actions or ():
            if isinstance(act, Send):
                self._transmit(node, act.face, act.packet)
            elif isinstance(act, Timer):
                self.at(self.now + act.delay, "timer", node, act.token)
            elif isinstance(act, Note):
                if act.kind == "drop":
                    self.drops[act.extra.get("reason", "unspecified")] += 1
                self._record(node, act.kind, act.ptype, act.name, act.face, act.extra)

    def _packet_extra(self, packet) -> dict:
        if packet_kind(packet) == "interest":
            return {"nonce": f"{packet.nonce:016x}"}
        if packet_kind(packet) == "deploy":
            return {"chain": "/".join(str(x) for x in packet.face_chain)}
        return {}

    def _name_of(self, packet) -> str:
        if packet_kind(packet) == "deploy":
            return f"/sd-nsn/deploy/{packet.microservice.id}"
        return str(packet.name)

    def _transmit(self, node: str, face: int, packet) -> None:
        ptype = packet_kind(packet)
        port = self.ports.get((node, face))
        if port is None:
            self.drops["no-link"] += 1
            self._record(node, "drop", ptype, self._name_of(packet), face, {"reason": "no-link"})
            return
        peer, peer_face, delay, loss = port
        wire = encode_packet(packet)
        self.sent[ptype] += 1
        self._record(node, "send", ptype, self._name_of(packet), face, self._packet_extra(packet))
        if loss and self._loss_rng.random() < loss:
            self.drops["lost"] += 1
            self._record(node, "lost", ptype, self._name_of(packet), face)
            return
        self.at(self.now + delay, "deliver", peer, (peer_face, wire))

    def step(self, e: Event) -> None:
        self.now = e.time
        node = self.nodes[e.node]
        if e.kind == "deliver":
            face, wire = e.payload
            packet = decode_packet(wire)
            self.delivered += 1
            self._record(e.node, "recv", packet_kind(packet), self._name_of(packet), face,
                         self._packet_extra(packet))
            self._apply(e.node, node.receive(face, packet, self.now))
        elif e.kind == "timer":
            self._record(e.node, "timer", name="-", extra={"token": ":".join(map(str, e.payload))})
            self._apply(e.node, node.fire(e.payload, self.now))
        elif e.kind == "local_request":
            head, executiontime = e.payload
            self._apply(e.node, node.submit_local_request(head, executiontime, self.now))
        elif e.kind == "monitor_tick":
            self._apply(e.node, node.start_monitor_round(self.now))
            nxt = self.now + (self.monitor_period or 0)
            if self.monitor_period and self.horizon is not None and nxt < self.horizon:
                self.at(nxt, "monitor_tick", e.node)
        else:
            raise ValueError(f"unknown event kind {e.kind!r}")

    def run(self) -> tuple[list[TraceRecord], dict]:
        while self._queue:
            if self.horizon is not None and self._queue[0].time > self.horizon:
                break
            self.step(heapq.heappop(self._queue))
        return self.trace, self.metrics()

    # -- results -------------------------------------------------------------

    def agents(self) -> dict[str, Agent]:
        return {k: v for k, v in self.nodes.items() if isinstance(v, Agent)}

    def metrics(self) -> dict:
        agents = self.agents()
        requests = []
        for aid in sorted(agents):
            for req in agents[aid].requests.values():
                requests.append({
                    "agent": aid, "id": req.id, "head": req.head, "issued_at": req.issued_at,
                    "completed_at": req.completed_at, "latency": req.latency, "state": req.state,
                })
        requests.sort(key=lambda r: (r["issued_at"], r["agent"], r["id"]))
        placement = {}
        if self.controller is not None:
            for head in sorted(self.controller.trees):
                tree = self.controller.trees[head]
                placement[head] = dict(sorted(tree.placement.items()))
        return {
            "version": METRICS_VERSION,
            "time": self.now,
            "requests": requests,
            "packets": {k: self.sent.get(k, 0) for k in ("interest", "data", "deploy")},
            "delivered": self.delivered,
            "drops": dict(sorted(self.drops.items())),
            "cache_hits": sum(a.cache_hits for a in agents.values()),
            "installs": {aid: sorted(agents[aid].repository) for aid in sorted(agents)},
            "placement": placement,
            "pending_services": {aid: sorted(agents[aid].pst) for aid in sorted(agents) if agents[aid].pst},
            "pending_events": len(self._queue),
            "non_quiescent": bool(self._queue),
            "trace_digest": trace_digest(self.trace),
        }


def run(topology: Topology, scenario_events: Iterable[tuple] = (), seed: int = 0, **options):
    """Build a simulator, schedule ``(time, agent, head, executiontime)`` requests and run it."""
    sim = Simulator(topology, seed=seed, **options)
    for time, agent, head, executiontime in scenario_events:
        sim.request(time, agent, head, executiontime)
    return sim.run()
