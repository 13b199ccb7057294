"""Greedy microservice placement.

Microservices are placed one at a time, segment by segment, starting from the
one nearest the data source and moving up toward the head. Each candidate
agent is scored as

    w_delay * delay(agent, downstream agent)
  + w_data  * delay(agent, data source)
  + w_store * storage_pressure(agent)
  + w_energy * (1 - battery(agent) / 100)

over agents that still have the storage and compute the microservice needs.
Lower is better; equal scores go to the lowest agent id. The head is placed
on the feasible agent closest to the requester (or the controller attachment).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import Unplaceable, UnknownData
from .names import MicroserviceDescriptor, ServiceChart, ServiceTree
from .topology import Paths, TopologyImage


@dataclass(frozen=True)
class Weights:
    delay: float = 1.0
    data: float = 1.0
    store: float = 0.5
    energy: float = 0.5


@dataclass(frozen=True)
class Decision:
    microservice: str
    agent: str
    score: float


@dataclass(frozen=True)
class Work:
    """One greedy step: what is being placed and what it connects to."""

    ms: MicroserviceDescriptor
    downstream: str | None  # element the microservice feeds from; None for the head
    data: str | None


def processing_order(chart: ServiceChart) -> list[Work]:
    order = []
    for seg in chart.segments:
        elements = seg.elements
        for i in range(len(seg.microservices) - 1, -1, -1):
            order.append(Work(seg.microservices[i], elements[i + 1], seg.data))
    order.append(Work(chart.head, None, None))
    return order


class Capacity:
    """Remaining storage/compute per agent while a placement is being built."""

    def __init__(self, topo: TopologyImage):
        self.status = topo.agents
        self.storage = {a: s.storage_free for a, s in topo.agents.items()}
        self.compute = {a: s.compute_free for a, s in topo.agents.items()}

    def fits(self, agent: str, ms: MicroserviceDescriptor) -> bool:
        return self.storage[agent] >= ms.storage_demand and self.compute[agent] >= ms.compute_demand

    def take(self, agent: str, ms: MicroserviceDescriptor) -> None:
        self.storage[agent] -= ms.storage_demand
        self.compute[agent] -= ms.compute_demand

    def pressure(self, agent: str) -> float:
        total = self.status[agent].storage_total
        if total <= 0:
            return 1.0
        return 1.0 - self.storage[agent] / total


def score(agent: str, downstream_agent: str, data_agent: str, paths: dict[str, Paths],
          cap: Capacity, w: Weights) -> float:
    p = paths[agent]
    battery = cap.status[agent].battery
    return (w.delay * p.dist[downstream_agent]
            + w.data * p.dist[data_agent]
            + w.store * cap.pressure(agent)
            + w.energy * (1 - battery / 100))


def greedy(chart: ServiceChart, topo: TopologyImage, weights: Weights = Weights(),
           anchor: str | None = None, paths: dict[str, Paths] | None = None) -> list[Decision]:
    """Place every microservice of ``chart``; returns decisions in processing order."""
    chart.validate()
    for seg in chart.segments:
        if seg.data not in topo.data_locations:
            raise UnknownData(f"location of {seg.data!r} unknown")
    if paths is None:
        paths = topo.all_paths()
    cap = Capacity(topo)
    located: dict[str, str] = {}
    decisions = []
    agents = sorted(topo.agents)

    for work in processing_order(chart):
        ms = work.ms
        best = None
        if work.downstream is None:
            origin = anchor if anchor in paths else None
            for a in agents:
                if not cap.fits(a, ms):
                    continue
                d = paths[origin].dist.get(a) if origin else 0
                if d is None:
                    continue
                if best is None or d < best[0]:
                    best = (float(d), a)
        else:
            down = located.get(work.downstream) or topo.data_locations[work.downstream]
            data_agent = topo.data_locations[work.data]
            for a in agents:
                if not cap.fits(a, ms):
                    continue
                if down not in paths[a].dist or data_agent not in paths[a].dist:
                    continue
                s = score(a, down, data_agent, paths, cap, weights)
                if best is None or s < best[0]:
                    best = (s, a)
        if best is None:
            raise Unplaceable(f"no agent can host {ms.id}")
        cap.take(best[1], ms)
        located[ms.id] = best[1]
        decisions.append(Decision(ms.id, best[1], best[0]))
    return decisions


def place_service(chart: ServiceChart, topo: TopologyImage, weights: Weights = Weights(),
                  requester: str | None = None, attachment: str | None = None) -> ServiceTree:
    paths = topo.all_paths()
    anchor = requester if requester in topo.agents else attachment
    decisions = greedy(chart, topo, weights, anchor, paths)
    placement = {d.microservice: d.agent for d in decisions}

    hop_faces = {}
    data_agents = {}
    for seg in chart.segments:
        chain = [chart.head.id] + seg.elements
        data_agents[seg.data] = topo.data_locations[seg.data]
        for up, down in zip(chain, chain[1:]):
            a = placement[up]
            b = placement.get(down) or data_agents[down]
            if b not in paths[a].faces:
                raise Unplaceable(f"{b} unreachable from {a}")
            hop_faces[(up, down)] = paths[a].faces[b]

    entry = ()
    if requester in topo.agents:
        entry = paths[requester].faces.get(placement[chart.head.id])
        if entry is None:
            raise Unplaceable(f"head agent unreachable from requester {requester}")
    return ServiceTree(chart, placement, hop_faces, data_agents, tuple(entry))
