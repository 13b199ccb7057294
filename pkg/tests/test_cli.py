import copy
import json

import pytest
import yaml

from sdnsn.cli import main
from sdnsn.errors import ParseError, ScenarioError
from sdnsn.scenario import load_text, parse_scenario, shipped, validate_document
from sdnsn.simnet import TraceRecord

SHIPPED = ["multimedia.scn", "digital-twin.scn", "line3.scn"]


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_validate(name, capsys):
    assert main(["validate", str(shipped(name))]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def _doc():
    return yaml.safe_load(shipped("multimedia.scn").read_text())


def _violations(doc):
    _, problems = validate_document(doc)
    return problems


def test_link_to_unknown_agent(tmp_path, capsys):
    doc = _doc()
    doc["topology"]["links"][0]["b"] = "ghost"
    path = tmp_path / "bad.scn"
    path.write_text(yaml.safe_dump(doc))
    assert main(["validate", str(path)]) == 1
    assert "unknown agent 'ghost'" in capsys.readouterr().err


def test_duplicate_face():
    doc = _doc()
    doc["topology"]["links"][1]["a_face"] = 1
    assert any("face 1 of agent 'nsn1' used 2 times" in p for p in _violations(doc))


MUTATIONS = {
    "duplicate node": lambda d: d["topology"]["nodes"].append(dict(d["topology"]["nodes"][0])),
    "request agent": lambda d: d["requests"][0].update(agent="nobody"),
    "request head": lambda d: d["requests"][0].update(head="nothing"),
    "data agent": lambda d: d["topology"]["data"][0].update(agent="nobody"),
    "controller agent": lambda d: d["topology"]["controller"].update(agent="nobody"),
    "chart data": lambda d: d["charts"][0]["segments"][0].update(data="missing"),
    "duplicate head": lambda d: d["charts"].append(copy.deepcopy(d["charts"][0])),
    "negative delay": lambda d: d["topology"]["links"][0].update(delay=-1),
    "self loop": lambda d: d["topology"]["links"][0].update(b="nsn1"),
    "bad label": lambda d: d["topology"]["nodes"][0].update(id="NSN1"),
    "late request": lambda d: d["requests"][0].update(time=10**6),
    "zero deadline": lambda d: d["requests"][0].update(executiontime=0),
    "unknown field": lambda d: d.update(colour="blue"),
    "duplicate ms": lambda d: d["charts"][0]["segments"][1]["microservices"].append(
        dict(d["charts"][0]["segments"][0]["microservices"][0])),
}


@pytest.mark.parametrize("what", sorted(MUTATIONS))
def test_every_mutation_is_reported(what):
    doc = _doc()
    assert _violations(doc) == []
    MUTATIONS[what](doc)
    assert _violations(doc), what


def test_all_violations_listed_together():
    doc = _doc()
    for m in ("request agent", "data agent", "negative delay"):
        MUTATIONS[m](doc)
    assert len(_violations(doc)) >= 3


def test_negative_request_allowed_when_flagged():
    doc = _doc()
    doc["requests"][0].update(head="nothing", negative=True)
    assert _violations(doc) == []


def test_violations_carry_line_numbers():
    text = shipped("multimedia.scn").read_text().replace("b: nsn3, b_face: 0", "b: ghost, b_face: 0")
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "ghost" in l)
    assert any(v.startswith(f"line {line}:") for v in exc.value.violations)


def test_parse_error_has_line():
    with pytest.raises(ParseError) as exc:
        load_text("version: 1\ntopology:\n  nodes: [\n")
    assert exc.value.line == 4


def test_run_prints_stable_digest(capsys):
    path = str(shipped("multimedia.scn"))
    assert main(["run", "--scenario", path, "--seed", "1"]) == 0
    first = capsys.readouterr().out.strip()
    assert main(["run", "--scenario", path, "--seed", "1"]) == 0
    assert capsys.readouterr().out.strip() == first
    assert len(first) == 16 and int(first, 16) >= 0


def test_run_writes_trace_and_metrics(tmp_path, capsys):
    trace, metrics = tmp_path / "out.tsv", tmp_path / "m.json"
    rc = main(["run", "--scenario", str(shipped("multimedia.scn")), "--trace", str(trace),
               "--metrics", str(metrics)])
    assert rc == 0
    lines = trace.read_text().splitlines()
    assert lines and all(len(l.split("\t")) == 7 for l in lines)
    assert all(TraceRecord.parse(l).line() == l for l in lines)
    m = json.loads(metrics.read_text())
    assert {"version", "requests", "packets", "cache_hits", "placement", "trace_digest"} <= set(m)
    assert m["trace_digest"] == capsys.readouterr().out.strip()


def test_second_request_is_cheaper(tmp_path):
    trace, metrics = tmp_path / "out.tsv", tmp_path / "m.json"
    main(["run", "--scenario", str(shipped("multimedia.scn")), "--trace", str(trace),
          "--metrics", str(metrics)])
    m = json.loads(metrics.read_text())
    first, second = m["requests"]
    assert m["cache_hits"] > 0 and second["latency"] < first["latency"]
    recs = [TraceRecord.parse(l) for l in trace.read_text().splitlines()]

    def link_interests(lo, hi):
        return [r for r in recs if lo <= r.time <= hi and r.kind == "send" and r.ptype == "interest"
                and r.face not in ("app", "self") and "monitor" not in r.name]

    # by hand: lookup floods 4 copies (nsn1 x2, nsn3, nsn2), one retrieve to
    # the controller, the head sends 2 segment Interests and each segment
    # agent sends 1 terminal Interest
    assert len(link_interests(first["issued_at"], first["completed_at"])) == 9
    assert link_interests(second["issued_at"], second["completed_at"]) == []


def test_strict_flag_on_non_quiescent_run(tmp_path):
    doc = _doc()
    doc["horizon"] = 510
    path = tmp_path / "short.scn"
    path.write_text(yaml.safe_dump(doc).replace("time: 3000", "time: 500"))
    assert main(["run", "--scenario", str(path)]) == 0
    assert main(["run", "--scenario", str(path), "--strict"]) == 2


def test_missing_file_is_validation_failure(tmp_path):
    assert main(["validate", str(tmp_path / "nope.scn")]) == 1
