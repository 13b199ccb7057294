import pytest

from sdnsn.actions import Send, Timer
from sdnsn.agent import ERROR_MARKER
from sdnsn.controller import Controller
from sdnsn.errors import DuplicateHead, InvalidChart
from sdnsn.names import (
    MONITOR_NAME,
    ChartSegment,
    MicroserviceDescriptor as M,
    ServiceChart,
    parse_name,
    retrieve_name,
)
from sdnsn.packets import AgentStatus, DataPacket, DeployPacket, InterestPacket, Neighbor
from sdnsn.simnet import ControllerAttachment, NodeSpec, Simulator, Topology

from _support import MULTIMEDIA, ground_truth_image, multimedia_chart, multimedia_topology


def controller(**kw):
    c = Controller("nsn1", **kw)
    c.register_chart(multimedia_chart())
    c.image = ground_truth_image(multimedia_topology())
    return c


def test_monitor_rounds_use_fresh_nonces():
    c = Controller("a")
    r1 = c.start_monitor_round(0)
    r2 = c.start_monitor_round(1000)
    n1 = [a.packet.nonce for a in r1 if isinstance(a, Send)]
    n2 = [a.packet.nonce for a in r2 if isinstance(a, Send)]
    assert len(n1) == len(n2) == 1 and n1 != n2
    assert any(isinstance(a, Timer) for a in r1)


def test_single_agent_round():
    sim = Simulator(Topology([NodeSpec("solo")], controller=ControllerAttachment("solo", 0)), horizon=10)
    sim.run()
    assert set(sim.controller.image.agents) == {"solo"}


def test_five_agent_round_collects_each_status_once():
    topo = multimedia_topology()
    sim = Simulator(topo, horizon=500, round_timeout=300)
    sim.run()
    rnd = sim.controller.rounds[0]
    assert dict(rnd.reports) == {a: 1 for a in ("nsn1", "nsn2", "nsn3", "nsn4", "nsn5")}


def test_ingest_merges_and_maps_adjacency():
    c = Controller("a")
    sa = AgentStatus("a", 1, 1, 1, (Neighbor(1, "b", 10),))
    sb = AgentStatus("b", 1, 1, 1, (Neighbor(4, "a", 10),))
    c.ingest_monitor_data(DataPacket(MONITOR_NAME, status_list=(sa, sb)))
    c.ingest_monitor_data(DataPacket(MONITOR_NAME, status_list=(sb,)))
    assert sorted(c.image.agents) == ["a", "b"]
    assert c.image.adjacency[("a", 1)] == ("b", 10)
    c.ingest_monitor_data(DataPacket(MONITOR_NAME, status_list=()))
    assert sorted(c.image.agents) == ["a", "b"]


def test_register_chart_errors():
    c = Controller("a")
    c.register_chart(multimedia_chart())
    with pytest.raises(DuplicateHead):
        c.register_chart(multimedia_chart())
    with pytest.raises(InvalidChart):
        c.register_chart(ServiceChart(M("h", 1), (ChartSegment("S1", (M("x", 1), M("x", 1)), "d"),)))


def test_deploy_chains():
    c = controller()
    tree = c.place_service("multimedia", "nsn1")
    sends, entries = c.deploy_tree(tree)
    chains = {e.microservice: e.face_chain for e in entries}
    assert chains == {"multimedia": ("nsn1",), "videoanalysis": (1, "nsn3"), "soundanalysis": (2, "nsn2")}
    head = next(s.packet for s in sends if s.packet.microservice.id == "multimedia")
    assert parse_name(head.microservice.tree) == parse_name(MULTIMEDIA)
    # already installed: nothing to send the second time
    assert c.deploy_tree(tree) == ([], [])


def test_two_hop_chain_follows_shortest_path():
    c = controller()
    c.image = ground_truth_image(multimedia_topology())
    paths = c.image.shortest_paths("nsn1")
    assert paths.faces["nsn5"] == (1, 30)


def test_retrieve_returns_exec_name_after_deploys():
    c = controller()
    out = c.handle_retrieve_interest(InterestPacket(retrieve_name("multimedia", "nsn1"), 1))
    packets = [a.packet for a in out if isinstance(a, Send)]
    assert all(isinstance(p, DeployPacket) for p in packets[:-1])
    assert isinstance(packets[-1], DataPacket)
    assert packets[-1].payload.decode() == MULTIMEDIA


def test_retrieve_unknown_head():
    c = controller()
    out = c.handle_retrieve_interest(InterestPacket(retrieve_name("nothing"), 1))
    (d,) = [a.packet for a in out if isinstance(a, Send)]
    assert d.payload.startswith(ERROR_MARKER)


def test_concurrent_retrieves_give_identical_trees():
    c1, c2 = controller(), controller()
    t1 = c1.place_service("multimedia", "nsn1")
    t2 = c1.place_service("multimedia", "nsn1")
    t3 = c2.place_service("multimedia", "nsn1")
    assert t1 == t2 == t3
