import random

import pytest

from sdnsn.errors import TimeTravel
from sdnsn.names import plain
from sdnsn.packets import InterestPacket
from sdnsn.simnet import (
    Event,
    Link,
    NodeSpec,
    Simulator,
    Topology,
    TraceRecord,
    run,
    trace_digest,
    trace_text,
)

from _support import multimedia_chart, multimedia_topology, random_topology


def line2():
    return Topology([NodeSpec("a"), NodeSpec("b")], [Link("a", 1, "b", 1, 10)])


def test_equal_time_events_run_fifo():
    sim = Simulator(line2())
    seen = []
    sim.step = lambda e: seen.append(e.payload)
    sim.schedule(Event(10, 0, "timer", "a", "first"))
    sim.schedule(Event(10, 0, "timer", "a", "second"))
    sim.run()
    assert seen == ["first", "second"]


def test_time_travel_rejected():
    sim = Simulator(line2())
    sim.now = 50
    with pytest.raises(TimeTravel):
        sim.schedule(Event(49, 0, "timer", "a", ("x",)))


def test_delivery_is_send_time_plus_delay():
    sim = Simulator(line2())
    sim.now = 5
    sim._transmit("a", 1, InterestPacket(plain("x"), 1))
    (e,) = sim._queue
    assert (e.time, e.node, e.kind) == (15, "b", "deliver")


def test_empty_scenario():
    trace, metrics = run(Topology([]), [])
    assert trace == []
    assert metrics["packets"] == {"interest": 0, "data": 0, "deploy": 0}
    assert metrics["requests"] == [] and metrics["cache_hits"] == 0


def test_trace_record_line_round_trip():
    r = TraceRecord(12, "nsn3", "send", "interest", "/video-aircraft320", "30", (("nonce", "ab"),))
    assert r.line() == "12\tnsn3\tsend\tinterest\t/video-aircraft320\t30\tnonce=ab"
    assert TraceRecord.parse(r.line()) == r


def _multimedia_sim(seed=1):
    sim = Simulator(multimedia_topology(), seed=seed, horizon=5000, charts=[multimedia_chart()],
                    round_timeout=300)
    sim.request(500, "nsn1", "multimedia", 200)
    sim.request(3000, "nsn1", "multimedia", 200)
    return sim


def test_causality_and_conservation():
    trace, metrics = _multimedia_sim().run()
    sends = [r for r in trace if r.kind == "send" and r.face not in ("app", "self")]
    recvs = [r for r in trace if r.kind == "recv" and r.face not in ("app", "self")]
    lost = [r for r in trace if r.kind in ("lost", "drop") and r.get("reason") == "no-link"]
    topo = multimedia_topology()
    ports = {}
    for l in topo.links:
        ports[(l.a, l.a_face)] = (l.b, str(l.b_face), l.delay)
        ports[(l.b, l.b_face)] = (l.a, str(l.a_face), l.delay)
    ports[("nsn1", 9)] = ("controller", "0", 1)
    ports[("controller", 0)] = ("nsn1", "9", 1)
    # every send is received exactly once, at send time + link delay
    pending = {}
    for s in sends:
        peer, pface, delay = ports[(s.node, int(s.face))]
        pending.setdefault((s.time + delay, peer, pface, s.ptype, s.name), []).append(s)
    for r in recvs:
        key = (r.time, r.node, r.face, r.ptype, r.name)
        assert pending.get(key), r.line()
        pending[key].pop()
    assert not any(pending.values()) and not lost
    assert metrics["delivered"] == len(recvs)


def test_same_seed_same_trace():
    t1, _ = _multimedia_sim(3).run()
    t2, _ = _multimedia_sim(3).run()
    assert trace_text(t1) == trace_text(t2)
    assert trace_digest(t1) == trace_digest(t2)


def test_quiescent_multimedia_run():
    _, m = _multimedia_sim().run()
    assert not m["non_quiescent"] and not m["pending_services"]
    assert [r["state"] for r in m["requests"]] == ["done", "done"]


def test_horizon_reports_non_quiescence():
    sim = Simulator(multimedia_topology(), horizon=5, charts=[multimedia_chart()])
    _, m = sim.run()
    assert m["non_quiescent"] and m["pending_events"] > 0


def test_lossy_links_drop_with_reason():
    topo = Topology([NodeSpec("a"), NodeSpec("b")], [Link("a", 1, "b", 1, 10, loss=1.0)])
    sim = Simulator(topo)
    sim._transmit("a", 1, InterestPacket(plain("x"), 1))
    assert [r.kind for r in sim.trace] == ["send", "lost"] and not sim._queue


def test_random_topologies_stay_quiescent():
    rng = random.Random(5)
    for _ in range(20):
        topo = random_topology(rng, n_max=6, storage=(10, 60))
        _, m = Simulator(topo, horizon=3000, round_timeout=800).run()
        assert not m["non_quiescent"]
