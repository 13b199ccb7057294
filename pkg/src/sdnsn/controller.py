"""Software-defined management plane.

The controller reaches the NSN network through one attachment agent. It
floods periodic ``/sd-nsn/monitor`` Interests, folds the returned agent
statuses into a :class:`TopologyImage`, answers ``/sd-nsn/retrieve`` Interests
with a placed Service Tree, and installs microservices with source-routed
Deploy packets.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass, field, replace

from .actions import Note, Send, Timer
from .agent import ERROR_MARKER
from .errors import DuplicateHead, NoRoute, SdnsnError, UnknownHead
from .names import MONITOR_NAME, ServiceChart, ServiceTree, tree_to_name
from .packets import AgentStatus, DataPacket, DeployPacket, InterestPacket
from .placement import Weights, place_service
from .topology import TopologyImage

log = logging.getLogger(__name__)

CONTROLLER_ID = "controller"


@dataclass(frozen=True)
class SourceRouteEntry:
    target: str
    microservice: str
    face_chain: tuple


@dataclass
class MonitorRound:
    nonce: int
    started_at: int
    reports: Counter = field(default_factory=Counter)
    closed: bool = False


class Controller:
    def __init__(self, attachment: str, face: int = 0, *, weights: Weights = Weights(),
                 monitor_period: int = 1000, round_timeout: int = 500,
                 rng: random.Random | None = None):
        self.id = CONTROLLER_ID
        self.attachment = attachment
        self.face = face
        self.weights = weights
        self.monitor_period = monitor_period
        self.round_timeout = round_timeout
        self.rng = rng or random.Random(CONTROLLER_ID)

        self.now = 0
        self.charts: dict[str, ServiceChart] = {}
        self.image = TopologyImage()
        self.rounds: list[MonitorRound] = []
        self.routes: list[SourceRouteEntry] = []
        self.installed: set[tuple[str, str]] = set()
        self.trees: dict[str, ServiceTree] = {}

    # -- registry ------------------------------------------------------------

    def register_chart(self, chart: ServiceChart) -> None:
        chart.validate()
        if chart.label in self.charts:
            raise DuplicateHead(chart.label)
        self.charts[chart.label] = chart

    # -- monitoring ----------------------------------------------------------

    def start_monitor_round(self, now: int) -> list:
        self.now = now
        rnd = MonitorRound(self.rng.getrandbits(64), now)
        self.rounds.append(rnd)
        return [
            Note("round-start", str(MONITOR_NAME), extra={"round": len(self.rounds)}),
            Send(self.face, InterestPacket(MONITOR_NAME, rnd.nonce)),
            Timer(self.round_timeout, ("round-close", len(self.rounds))),
        ]

    def ingest_monitor_data(self, d: DataPacket) -> TopologyImage:
        rnd = self.rounds[-1] if self.rounds and not self.rounds[-1].closed else None
        for status in d.status_list or ():
            if not isinstance(status, AgentStatus) or not status.agent_id:
                log.warning("skipping malformed status record %r", status)
                continue
            if rnd is not None:
                rnd.reports[status.agent_id] += 1
            self.image.merge(status, self.now)
        return self.image

    # -- placement and deployment -------------------------------------------

    def place_service(self, head: str, requester: str | None = None) -> ServiceTree:
        chart = self.charts.get(head)
        if chart is None:
            raise UnknownHead(head)
        tree = place_service(chart, self.image, self.weights, requester=requester,
                             attachment=self.attachment)
        self.trees[head] = tree
        return tree

    def deploy_tree(self, tree: ServiceTree) -> tuple[list, list[SourceRouteEntry]]:
        paths = self.image.shortest_paths(self.attachment)
        head_tree = str(tree_to_name(tree, with_entry=False))
        sends, entries = [], []
        for ms in tree.chart.microservices():
            agent = tree.placement[ms.id]
            if (ms.id, agent) in self.installed:
                continue
            if agent not in paths.faces:
                raise NoRoute(f"no route from {self.attachment} to {agent}")
            if ms.id == tree.chart.label:
                ms = replace(ms, tree=head_tree)
            packet = DeployPacket(paths.faces[agent], agent, ms)
            entry = SourceRouteEntry(agent, ms.id, packet.face_chain)
            self.installed.add((ms.id, agent))
            self.routes.append(entry)
            entries.append(entry)
            sends.append(Send(self.face, packet))
        return sends, entries

    def handle_retrieve_interest(self, i: InterestPacket) -> list:
        head = i.name.head
        try:
            tree = self.place_service(head, i.name.requester)
            sends, _ = self.deploy_tree(tree)
        except UnknownHead:
            return [Send(self.face, DataPacket(i.name, ERROR_MARKER + b"unknown-head"))]
        except SdnsnError as exc:
            reason = type(exc).__name__.lower()
            return [Send(self.face, DataPacket(i.name, ERROR_MARKER + reason.encode()))]
        name = tree_to_name(tree)
        notes = [Note("tree", str(name), extra={"head": head})]
        # Installs go out ahead of the reply so they reach every agent before
        # the exec Interests that the reply triggers.
        return notes + sends + [Send(self.face, DataPacket(i.name, str(name).encode()))]

    # -- event entry points --------------------------------------------------

    def receive(self, face: int, packet, now: int) -> list:
        self.now = now
        if isinstance(packet, DataPacket) and packet.name.command == "monitor":
            self.ingest_monitor_data(packet)
            return []
        if isinstance(packet, InterestPacket) and packet.name.command == "retrieve":
            return self.handle_retrieve_interest(packet)
        return [Note("drop", str(getattr(packet, "name", "-")), face,
                     extra={"reason": "not-for-controller"})]

    def fire(self, token: tuple, now: int) -> list:
        self.now = now
        if token[0] == "round-close":
            rnd = self.rounds[token[1] - 1]
            rnd.closed = True
            return [Note("round-close", str(MONITOR_NAME),
                         extra={"round": token[1], "agents": len(rnd.reports)})]
        if token[0] == "monitor-tick":
            return self.start_monitor_round(now)
        return []

