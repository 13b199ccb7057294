"""The controller's view of the network, built from monitor responses."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

from .packets import AgentStatus

log = logging.getLogger(__name__)


@dataclass
class Paths:
    """Single-source shortest-delay paths.

    ``faces[b]`` is the face walk from the source to ``b``; ``nodes[b]`` the
    agents visited after the source.
    """

    source: str
    dist: dict[str, int]
    faces: dict[str, tuple[int, ...]]
    nodes: dict[str, tuple[str, ...]]


@dataclass
class TopologyImage:
    agents: dict[str, AgentStatus] = field(default_factory=dict)
    observed_at: dict[str, int] = field(default_factory=dict)
    adjacency: dict[tuple[str, int], tuple[str, int]] = field(default_factory=dict)
    data_locations: dict[str, str] = field(default_factory=dict)

    def merge(self, status: AgentStatus, now: int) -> None:
        if status.agent_id in self.observed_at and self.observed_at[status.agent_id] > now:
            return
        self.agents[status.agent_id] = status
        self.observed_at[status.agent_id] = now
        self.rebuild()

    def rebuild(self) -> None:
        self.adjacency = {}
        self.data_locations = {}
        for aid in sorted(self.agents):
            st = self.agents[aid]
            for nb in st.neighbor_delays:
                self.adjacency[(aid, nb.face)] = (nb.agent_id, nb.delay)
            for d in st.data_names:
                # lowest agent id wins when several agents host the same data
                self.data_locations.setdefault(d, aid)

    def neighbors(self, agent: str) -> list[tuple[int, str, int]]:
        st = self.agents.get(agent)
        if st is None:
            return []
        return sorted((nb.face, nb.agent_id, nb.delay) for nb in st.neighbor_delays
                      if nb.agent_id in self.agents)

    def is_consistent(self) -> bool:
        for (a, _), (b, _) in self.adjacency.items():
            if not any(nb == a for (x, _), (nb, _) in self.adjacency.items() if x == b):
                return False
        return True

    def shortest_paths(self, source: str) -> Paths:
        """Dijkstra over link delays; ties resolved by lowest face, then agent id."""
        dist = {source: 0}
        faces: dict[str, tuple[int, ...]] = {source: ()}
        nodes: dict[str, tuple[str, ...]] = {source: ()}
        heap = [(0, (), source)]
        done = set()
        while heap:
            d, walk, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for face, v, delay in self.neighbors(u):
                if v in done:
                    continue
                nd, nwalk = d + delay, walk + (face,)
                if v not in dist or (nd, nwalk) < (dist[v], faces[v]):
                    dist[v], faces[v] = nd, nwalk
                    nodes[v] = nodes[u] + (v,)
                    heapq.heappush(heap, (nd, nwalk, v))
        return Paths(source, dist, faces, nodes)

    def all_paths(self) -> dict[str, Paths]:
        return {a: self.shortest_paths(a) for a in sorted(self.agents)}
