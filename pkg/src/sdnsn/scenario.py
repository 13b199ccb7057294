"""Scenario files.

A scenario is a YAML document (``.scn``) describing a topology, the service
charts registered with the controller, monitoring and placement settings and
a list of timed service requests. Times and delays are integer milliseconds.
See ``docs/scenario-format.md`` for the full layout.

Validation runs in two passes: a JSON Schema check of the document shape,
then referential checks (agents, faces, charts, data). Every violation found
is reported, each prefixed with the path of the offending field and, where the
YAML node is known, its line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .errors import ParseError, ScenarioError
from .names import ChartSegment, MicroserviceDescriptor, ServiceChart, chart_problems, is_label
from .placement import Weights
from .simnet import ControllerAttachment, DataItem, Link, NodeSpec, Simulator, Topology

SCENARIO_VERSION = 1

_NONNEG = {"type": "integer", "minimum": 0}
_LABEL = {"type": "string", "pattern": r"^[a-z0-9-]+$"}

_MICROSERVICE = {
    "type": "object",
    "required": ["id", "exec_time"],
    "additionalProperties": False,
    "properties": {
        "id": _LABEL,
        "exec_time": {"type": "integer", "minimum": 1},
        "storage": _NONNEG,
        "compute": _NONNEG,
        "tag": {"type": "string"},
    },
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "topology"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCENARIO_VERSION},
        "seed": _NONNEG,
        "horizon": {"type": "integer", "minimum": 1},
        "monitor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"period": _NONNEG, "round_timeout": {"type": "integer", "minimum": 1}},
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in ("delay", "data", "store", "energy")},
        },
        "pit_lifetime": {"type": "integer", "minimum": 1},
        "topology": {
            "type": "object",
            "required": ["nodes"],
            "additionalProperties": False,
            "properties": {
                "controller": {
                    "type": "object",
                    "required": ["agent", "face"],
                    "additionalProperties": False,
                    "properties": {"agent": _LABEL, "face": _NONNEG, "delay": _NONNEG},
                },
                "nodes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id"],
                        "additionalProperties": False,
                        "properties": {
                            "id": _LABEL,
                            "battery": {"type": "integer", "minimum": 0, "maximum": 100},
                            "storage": _NONNEG,
                            "compute": _NONNEG,
                        },
                    },
                },
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["a", "a_face", "b", "b_face", "delay"],
                        "additionalProperties": False,
                        "properties": {
                            "a": _LABEL, "a_face": _NONNEG, "b": _LABEL, "b_face": _NONNEG,
                            "delay": _NONNEG,
                            "loss": {"type": "number", "minimum": 0, "maximum": 1},
                        },
                    },
                },
                "data": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name", "agent"],
                        "additionalProperties": False,
                        "properties": {
                            "name": _LABEL, "agent": _LABEL,
                            "payload": {"type": "string"},
                            "freshness": {"type": ["integer", "null"], "minimum": 1},
                        },
                    },
                },
            },
        },
        "charts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["head", "segments"],
                "additionalProperties": False,
                "properties": {
                    "head": _MICROSERVICE,
                    "segments": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["label", "microservices", "data"],
                            "additionalProperties": False,
                            "properties": {
                                "label": {"type": "string", "pattern": r"^S[0-9]+$"},
                                "microservices": {"type": "array", "items": _MICROSERVICE},
                                "data": _LABEL,
                            },
                        },
                    },
                },
            },
        },
        "requests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["time", "agent", "head", "executiontime"],
                "additionalProperties": False,
                "properties": {
                    "time": _NONNEG,
                    "agent": _LABEL,
                    "head": _LABEL,
                    "executiontime": {"type": "integer", "minimum": 1},
                    "negative": {"type": "boolean"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class RequestSpec:
    time: int
    agent: str
    head: str
    executiontime: int
    negative: bool = False


@dataclass
class Scenario:
    topology: Topology
    charts: list[ServiceChart] = field(default_factory=list)
    monitor_period: int = 1000
    round_timeout: int = 500
    weights: Weights = Weights()
    requests: list[RequestSpec] = field(default_factory=list)
    horizon: int | None = None
    seed: int = 0
    pit_lifetime: int | None = None
    source: str = "<scenario>"

    def simulator(self, seed: int | None = None) -> Simulator:
        sim = Simulator(
            self.topology,
            seed=self.seed if seed is None else seed,
            horizon=self.horizon,
            charts=self.charts,
            weights=self.weights,
            monitor_period=self.monitor_period,
            round_timeout=self.round_timeout,
            pit_lifetime=self.pit_lifetime,
        )
        for r in self.requests:
            sim.request(r.time, r.agent, r.head, r.executiontime)
        return sim


# -- reading -----------------------------------------------------------------


def _line_index(node, path=(), out=None) -> dict[tuple, int]:
    """Map every document path to the 1-based line its YAML node starts on."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


def _where(path, lines) -> str:
    path = tuple(path)
    text = ".".join(str(p) for p in path) or "<root>"
    while path and path not in lines:
        path = path[:-1]
    line = lines.get(path)
    return f"line {line}: {text}" if line else text


def load_text(text: str, source: str = "<scenario>") -> tuple[dict, dict[tuple, int]]:
    try:
        doc = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        where = f"{source}:{line}" if line else source
        raise ParseError(f"{where}: {getattr(exc, 'problem', None) or exc}", line) from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be a mapping", 1)
    return doc, (_line_index(root) if root is not None else {})


# -- validation --------------------------------------------------------------


def schema_violations(doc: dict, lines: dict | None = None) -> list[str]:
    lines = lines or {}
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    return [f"{_where(e.absolute_path, lines)}: {e.message}" for e in errs]


def _microservice(d: dict) -> MicroserviceDescriptor:
    return MicroserviceDescriptor(d["id"], d["exec_time"], d.get("storage", 0),
                                  d.get("compute", 0), d.get("tag", d["id"]))


def _build(doc: dict, source: str) -> Scenario:
    t = doc["topology"]
    nodes = [NodeSpec(n["id"], n.get("battery", 100), n.get("storage", 0), n.get("compute", 0))
             for n in t["nodes"]]
    links = [Link(l["a"], l["a_face"], l["b"], l["b_face"], l["delay"], l.get("loss", 0.0))
             for l in t.get("links", [])]
    data = [DataItem(d["name"], d["agent"], d.get("payload", d["name"]).encode(), d.get("freshness"))
            for d in t.get("data", [])]
    ctl = t.get("controller")
    att = ControllerAttachment(ctl["agent"], ctl["face"], ctl.get("delay", 1)) if ctl else None
    charts = []
    for c in doc.get("charts", []):
        segs = tuple(ChartSegment(s["label"], tuple(_microservice(m) for m in s["microservices"]), s["data"])
                     for s in c["segments"])
        charts.append(ServiceChart(_microservice(c["head"]), segs))
    mon = doc.get("monitor", {})
    w = Weights(**doc.get("weights", {}))
    reqs = [RequestSpec(r["time"], r["agent"], r["head"], r["executiontime"], r.get("negative", False))
            for r in doc.get("requests", [])]
    return Scenario(
        topology=Topology(nodes, links, data, att),
        charts=charts,
        monitor_period=mon.get("period", 1000),
        round_timeout=mon.get("round_timeout", 500),
        weights=w,
        requests=reqs,
        horizon=doc.get("horizon"),
        seed=doc.get("seed", 0),
        pit_lifetime=doc.get("pit_lifetime"),
        source=source,
    )


def semantic_violations(sc: Scenario) -> list[str]:
    out = [f"topology.{p}" for p in sc.topology.problems()]
    agents = set(sc.topology.node_ids())
    if sc.topology.controller is None and sc.requests:
        out.append("topology.controller: requests need a controller attachment")
    data_names = {d.name for d in sc.topology.data_items}
    heads: dict[str, int] = {}
    declared: dict[str, MicroserviceDescriptor] = {}
    for i, chart in enumerate(sc.charts):
        for p in chart_problems(chart):
            out.append(f"charts.{i}: {p}")
        if chart.label in heads:
            out.append(f"charts.{i}: head {chart.label!r} already registered by charts.{heads[chart.label]}")
        heads.setdefault(chart.label, i)
        for ms in chart.microservices():
            prev = declared.setdefault(ms.id, ms)
            if prev != ms:
                out.append(f"charts.{i}: microservice {ms.id!r} redeclared with different parameters")
        for seg in chart.segments:
            if seg.data not in data_names:
                out.append(f"charts.{i}.segments: {seg.label} data {seg.data!r} is not hosted by any agent")
    for i, r in enumerate(sc.requests):
        if r.agent not in agents:
            out.append(f"requests.{i}: unknown agent {r.agent!r}")
        if r.head not in heads and not r.negative:
            out.append(f"requests.{i}: head {r.head!r} has no registered chart "
                       "(set negative: true for a deliberate unknown-head request)")
        if sc.horizon is not None and r.time > sc.horizon:
            out.append(f"requests.{i}: time {r.time} is after the horizon {sc.horizon}")
    for i, n in enumerate(sc.topology.nodes):
        if not is_label(n.id):
            out.append(f"topology.nodes.{i}: id {n.id!r} must be a lowercase label")
    return out


def _locate(message: str, lines: dict) -> str:
    path, sep, rest = message.partition(": ")
    if not sep:
        return message
    keys = tuple(int(k) if k.isdigit() else k for k in path.split("."))
    return f"{_where(keys, lines)}: {rest}"


def validate_document(doc: dict, lines: dict | None = None, source: str = "<scenario>"):
    """Return ``(scenario or None, violations)``."""
    lines = lines or {}
    problems = schema_violations(doc, lines)
    try:
        sc = _build(doc, source)
    except (KeyError, TypeError, ValueError, AttributeError):
        # too malformed to build; the schema errors already say why
        return None, problems
    for p in semantic_violations(sc):
        p = _locate(p, lines)
        if p not in problems:
            problems.append(p)
    return (None if problems else sc), problems


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    doc, lines = load_text(text, source)
    sc, problems = validate_document(doc, lines, source)
    if problems:
        raise ScenarioError(f"{source}: {len(problems)} violation(s)", problems)
    return sc


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{p}: {exc.strerror or exc}") from exc
    return parse_scenario(text, str(p))


def shipped(name: str) -> Path:
    """Path of a scenario bundled with the package, e.g. ``shipped("multimedia.scn")``."""
    return Path(str(resources.files("sdnsn") / "scenarios" / name))
