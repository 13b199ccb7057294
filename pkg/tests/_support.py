"""Shared builders for the test suite."""

from __future__ import annotations

import random

import networkx as nx

from sdnsn.names import ChartSegment, MicroserviceDescriptor, ServiceChart
from sdnsn.packets import AgentStatus, Neighbor
from sdnsn.simnet import ControllerAttachment, DataItem, Link, NodeSpec, Topology
from sdnsn.topology import TopologyImage

MULTIMEDIA = (
    "/sd-nsn/exec/multimedia/S11/face1/videoanalysis/face30/video-aircraft320"
    "/S12/face2/soundanalysis/face10/soundfactory"
)

M = MicroserviceDescriptor


def multimedia_chart(exec_time=20, storage=10, compute=10) -> ServiceChart:
    return ServiceChart(
        M("multimedia", exec_time, storage, compute, "fuse"),
        (
            ChartSegment("S11", (M("videoanalysis", exec_time, storage, compute, "video"),),
                         "video-aircraft320"),
            ChartSegment("S12", (M("soundanalysis", exec_time, storage, compute, "sound"),),
                         "soundfactory"),
        ),
    )


def multimedia_topology() -> Topology:
    return Topology(
        nodes=[NodeSpec("nsn1", 90, 100, 100), NodeSpec("nsn2", 80, 100, 100),
               NodeSpec("nsn3", 80, 100, 100), NodeSpec("nsn4", 50, 0, 0),
               NodeSpec("nsn5", 50, 0, 0)],
        links=[Link("nsn1", 1, "nsn3", 0, 10), Link("nsn1", 2, "nsn2", 0, 10),
               Link("nsn3", 30, "nsn5", 0, 10), Link("nsn2", 10, "nsn4", 0, 10)],
        data_items=[DataItem("video-aircraft320", "nsn5", b"frames"),
                    DataItem("soundfactory", "nsn4", b"audio")],
        controller=ControllerAttachment("nsn1", 9, 1),
    )


def random_topology(rng: random.Random, n_max=8, n_min=1, controller_face=99,
                    storage=(0, 60), data_count=2) -> Topology:
    """Random connected topology: a random spanning tree plus a few chords."""
    n = rng.randint(n_min, n_max)
    ids = [f"n{i}" for i in range(n)]
    rng.shuffle(ids)
    next_face = {a: rng.randint(0, 5) for a in ids}

    def face(a):
        next_face[a] += rng.randint(1, 3)
        return next_face[a]

    pairs = set()
    for i in range(1, n):
        pairs.add(tuple(sorted((ids[i], ids[rng.randrange(i)]))))
    for _ in range(rng.randint(0, n)):
        a, b = rng.sample(ids, 2) if n > 1 else (ids[0], ids[0])
        if a != b:
            pairs.add(tuple(sorted((a, b))))
    links = [Link(a, face(a), b, face(b), rng.randint(1, 20)) for a, b in sorted(pairs)]
    nodes = [NodeSpec(a, rng.randint(10, 100), rng.randint(*storage), rng.randint(*storage))
             for a in sorted(ids)]
    data = [DataItem(f"data-{k}", rng.choice(ids), f"p{k}".encode()) for k in range(data_count)]
    att = rng.choice(ids)
    return Topology(nodes, links, data, ControllerAttachment(att, controller_face, 1))


def random_chart(rng: random.Random, topo: Topology, max_ms=4, head="svc") -> ServiceChart:
    """Chart with at most ``max_ms`` microservices including the head."""
    budget = rng.randint(0, max_ms - 1)
    n_seg = rng.randint(1, max(1, min(2, budget))) if budget else 1
    data = [d.name for d in topo.data_items]
    segs, k = [], 0
    for s in range(n_seg):
        take = budget if s == n_seg - 1 else rng.randint(0, budget)
        budget -= take
        mss = []
        for _ in range(take):
            mss.append(M(f"ms{k}", rng.randint(1, 30), rng.randint(0, 20), rng.randint(0, 20)))
            k += 1
        segs.append(ChartSegment(f"S{s + 1}", tuple(mss), rng.choice(data)))
    return ServiceChart(M(head, rng.randint(1, 30), rng.randint(0, 20), rng.randint(0, 20)),
                        tuple(segs))


def ground_truth_image(topo: Topology) -> TopologyImage:
    """What a perfect monitor round would report."""
    nbrs = {n.id: [] for n in topo.nodes}
    for l in topo.links:
        nbrs[l.a].append(Neighbor(l.a_face, l.b, l.delay))
        nbrs[l.b].append(Neighbor(l.b_face, l.a, l.delay))
    img = TopologyImage()
    for n in topo.nodes:
        data = tuple(sorted(d.name for d in topo.data_items if d.agent == n.id))
        img.merge(AgentStatus(n.id, n.battery, n.storage, n.compute,
                              tuple(sorted(nbrs[n.id], key=lambda x: x.face)),
                              n.storage, n.compute, data), 0)
    return img


def graph_of(topo: Topology) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(n.id for n in topo.nodes)
    for l in topo.links:
        if g.has_edge(l.a, l.b):
            g[l.a][l.b]["weight"] = min(g[l.a][l.b]["weight"], l.delay)
        else:
            g.add_edge(l.a, l.b, weight=l.delay)
    return g


def port_map(topo: Topology) -> dict:
    out = {}
    for l in topo.links:
        out[(l.a, l.a_face)] = (l.b, l.b_face)
        out[(l.b, l.b_face)] = (l.a, l.a_face)
    return out


def records(trace, **match):
    return [r for r in trace if all(getattr(r, k) == v for k, v in match.items())]
