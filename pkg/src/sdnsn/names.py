"""Named-service names, Service Charts and Service Trees.

A service name is a slash-delimited list of components. Each component falls
into exactly one lexical class:

* ``face<digits>``  - a face token, the interface to cross toward the next element
* ``S<digits>``     - a segment label opening a new branch of the service
* ``[a-z0-9-]+``    - a label naming a microservice or a data object

An optional ``/sd-nsn/<command>`` prefix selects the engine operation. Two
layouts exist for the body of ``exec`` (and prefix-less) names:

    /sd-nsn/exec/multimedia/S11/face1/videoanalysis/face30/video-aircraft320/S12/...
    /videoanalysis/face30/video-aircraft320

The first has a service head followed by segments; the second is a plain chain
of steps, which is what remains after an agent consumes the head.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import ElementNotFirst, InvalidChart, MalformedName, MissingHop

PREFIX = "sd-nsn"
# Spellings seen in the wild for the same prefix; accepted on input only.
PREFIX_ALIASES = frozenset({"sd-nsn", "sdn-nsn", "sdn-ndn"})
COMMANDS = ("exec", "lookup", "retrieve", "monitor", "deploy")

_FACE_RE = re.compile(r"face(\d+)")
_SEGMENT_RE = re.compile(r"S(\d+)")
_LABEL_RE = re.compile(r"[a-z0-9-]+")
_NUMBER_RE = re.compile(r"\d+")


def is_face_token(component: str) -> bool:
    return _FACE_RE.fullmatch(component) is not None


def is_segment_label(component: str) -> bool:
    return _SEGMENT_RE.fullmatch(component) is not None


def is_label(component: str) -> bool:
    # keywords, face tokens and bare numbers have their own lexical classes
    return (_LABEL_RE.fullmatch(component) is not None
            and not is_face_token(component)
            and not _NUMBER_RE.fullmatch(component)
            and component not in PREFIX_ALIASES
            and component not in COMMANDS)


def check_label(text: str, what: str = "label") -> str:
    if not isinstance(text, str) or not is_label(text):
        raise MalformedName(f"invalid {what}: {text!r}")
    return text


def face_token(face: int) -> str:
    return f"face{face}"


@dataclass(frozen=True)
class Step:
    """One hop of a chain: the faces to cross, then the element reached."""

    face_chain: tuple[int, ...]
    element: str

    def components(self) -> list[str]:
        return [face_token(f) for f in self.face_chain] + [self.element]


@dataclass(frozen=True)
class Segment:
    label: str
    steps: tuple[Step, ...]

    @property
    def level_path(self) -> tuple[int, ...]:
        """Digits of the label read as a branch path (``S12`` -> ``(1, 2)``)."""
        return tuple(int(c) for c in self.label[1:])

    def components(self) -> list[str]:
        out = [self.label]
        for step in self.steps:
            out.extend(step.components())
        return out


@dataclass(frozen=True)
class LookupMeta:
    executiontime: int
    triggeringtime: int


@dataclass(frozen=True)
class ServiceName:
    command: str | None = None
    head: str | None = None
    head_face_chain: tuple[int, ...] = ()
    segments: tuple[Segment, ...] = ()
    plain_chain: tuple[Step, ...] | None = None
    lookup_meta: LookupMeta | None = None
    # Extra label on retrieve names: the agent that asked for the tree.
    requester: str | None = None

    def __str__(self) -> str:
        return serialize_name(self)

    @property
    def is_exec(self) -> bool:
        return self.command in (None, "exec")

    def components(self) -> list[str]:
        out: list[str] = []
        if self.command is not None:
            out += [PREFIX, self.command]
        if self.command == "lookup":
            meta = self.lookup_meta
            out += [self.head, str(meta.executiontime), str(meta.triggeringtime)]
        elif self.command == "retrieve":
            out.append(self.head)
            if self.requester is not None:
                out.append(self.requester)
        elif self.command in ("monitor", "deploy"):
            if self.head is not None:
                out.append(self.head)
        elif self.plain_chain is not None:
            for step in self.plain_chain:
                out.extend(step.components())
        else:
            out += [face_token(f) for f in self.head_face_chain]
            out.append(self.head)
            for seg in self.segments:
                out.extend(seg.components())
        return out

    def leading_face(self) -> int | None:
        """The face that must be crossed before the first element, if any."""
        if not self.is_exec:
            return None
        if self.plain_chain is not None:
            faces = self.plain_chain[0].face_chain
        else:
            faces = self.head_face_chain
        return faces[0] if faces else None

    def pop_leading_face(self) -> tuple[int, "ServiceName"]:
        face = self.leading_face()
        if face is None:
            raise ElementNotFirst(f"{self} has no leading face")
        if self.plain_chain is not None:
            first = self.plain_chain[0]
            chain = (Step(first.face_chain[1:], first.element),) + self.plain_chain[1:]
            return face, replace(self, plain_chain=chain)
        return face, replace(self, head_face_chain=self.head_face_chain[1:])

    def first_element(self) -> str | None:
        """Element at the consumable position, or None when a face comes first."""
        if not self.is_exec or self.leading_face() is not None:
            return None
        if self.plain_chain is not None:
            return self.plain_chain[0].element
        return self.head

    def result_name(self) -> "ServiceName":
        """Name of the Data that answers this name.

        For exec-style names the answer is named after the elements only:
        faces, segment labels and the command prefix are dropped, which gives
        the microservice followed by every data object it used.
        """
        if not self.is_exec:
            return self
        if self.plain_chain is not None:
            elements = [s.element for s in self.plain_chain]
        else:
            elements = [self.head]
            for seg in self.segments:
                elements.extend(s.element for s in seg.steps)
        return ServiceName(plain_chain=tuple(Step((), e) for e in elements))


def plain(*elements: str) -> ServiceName:
    """Shorthand for a face-less plain chain such as ``/videoanalysis/video-aircraft320``."""
    return ServiceName(plain_chain=tuple(Step((), check_label(e)) for e in elements))


def lookup_name(head: str, executiontime: int, triggeringtime: int) -> ServiceName:
    return ServiceName(
        command="lookup",
        head=check_label(head),
        lookup_meta=LookupMeta(int(executiontime), int(triggeringtime)),
    )


def retrieve_name(head: str, requester: str | None = None) -> ServiceName:
    if requester is not None:
        check_label(requester, "requester")
    return ServiceName(command="retrieve", head=check_label(head), requester=requester)


MONITOR_NAME = ServiceName(command="monitor")


def deploy_name(microservice: str) -> ServiceName:
    return ServiceName(command="deploy", head=check_label(microservice))


# -- parsing -----------------------------------------------------------------


def split_components(text: str) -> list[str]:
    if not isinstance(text, str) or not text.startswith("/"):
        raise MalformedName(f"name must start with '/': {text!r}")
    comps = [c.strip() for c in text[1:].split("/")]
    if any(not c for c in comps):
        raise MalformedName(f"empty component in {text!r}")
    return comps


def parse_name(text: str) -> ServiceName:
    return name_from_components(split_components(text))


def name_from_components(comps: Sequence[str]) -> ServiceName:
    comps = list(comps)
    if not comps:
        raise MalformedName("name has no components")
    if comps[0] not in PREFIX_ALIASES:
        return _parse_body(None, comps)

    if len(comps) < 2 or comps[1] not in COMMANDS:
        raise MalformedName(f"unknown command in /{'/'.join(comps[:2])}")
    command, rest = comps[1], comps[2:]

    if command == "lookup":
        if len(rest) != 3 or not _NUMBER_RE.fullmatch(rest[1]) or not _NUMBER_RE.fullmatch(rest[2]):
            raise MalformedName("lookup name needs /<head>/<executiontime>/<triggeringtime>")
        return lookup_name(_label(rest[0]), int(rest[1]), int(rest[2]))
    if command == "retrieve":
        if len(rest) not in (1, 2):
            raise MalformedName("retrieve name needs /<head>[/<requester>]")
        return retrieve_name(_label(rest[0]), _label(rest[1]) if len(rest) == 2 else None)
    if command in ("monitor", "deploy"):
        if len(rest) > 1:
            raise MalformedName(f"too many components for {command}")
        return ServiceName(command=command, head=_label(rest[0]) if rest else None)
    return _parse_body("exec", rest)


def _label(component: str) -> str:
    if not is_label(component):
        raise MalformedName(f"expected a label, got {component!r}")
    return component


def _take_step(comps: list[str], i: int) -> tuple[Step, int]:
    faces = []
    while i < len(comps) and is_face_token(comps[i]):
        faces.append(int(comps[i][4:]))
        i += 1
    if i >= len(comps) or is_segment_label(comps[i]):
        raise MalformedName("face token not followed by an element")
    return Step(tuple(faces), _label(comps[i])), i + 1


def _parse_body(command: str | None, comps: list[str]) -> ServiceName:
    if not comps:
        raise MalformedName("exec name has no body")
    first, i = _take_step(comps, 0)

    if i < len(comps) and is_segment_label(comps[i]):
        segments = []
        while i < len(comps):
            label = comps[i]
            if not is_segment_label(label):
                raise MalformedName(f"expected segment label, got {label!r}")
            i += 1
            steps = []
            while i < len(comps) and not is_segment_label(comps[i]):
                step, i = _take_step(comps, i)
                steps.append(step)
            if not steps:
                raise MalformedName(f"segment {label} has no steps")
            segments.append(Segment(label, tuple(steps)))
        return ServiceName(
            command=command,
            head=first.element,
            head_face_chain=first.face_chain,
            segments=tuple(segments),
        )

    steps = [first]
    while i < len(comps):
        if is_segment_label(comps[i]):
            raise MalformedName("segment label inside a plain chain")
        step, i = _take_step(comps, i)
        steps.append(step)
    return ServiceName(command=command, plain_chain=tuple(steps))


def serialize_name(name: ServiceName) -> str:
    return "/" + "/".join(name.components())


# -- rewriting ---------------------------------------------------------------


def _child_from(steps: Sequence[Step]) -> tuple[int | None, ServiceName]:
    first = steps[0]
    if first.face_chain:
        face, rest = first.face_chain[0], first.face_chain[1:]
    else:
        face, rest = None, ()
    return face, ServiceName(plain_chain=(Step(rest, first.element),) + tuple(steps[1:]))


def rewrite_for_children(name: ServiceName, local_element: str) -> list[tuple[int | None, ServiceName]]:
    """Names to request from downstream once ``local_element`` is consumed.

    Returns one ``(first_face, child_name)`` pair per input of the local
    element. ``first_face`` is None when the next element sits on the same
    agent (an empty face chain in the tree).
    """
    if name.first_element() != local_element:
        raise ElementNotFirst(f"{local_element!r} is not at the consumable position of {name}")
    if name.plain_chain is not None:
        if len(name.plain_chain) == 1:
            return []
        return [_child_from(name.plain_chain[1:])]
    return [_child_from(seg.steps) for seg in name.segments]


# -- charts and trees --------------------------------------------------------


@dataclass(frozen=True)
class MicroserviceDescriptor:
    id: str
    exec_time: int
    storage_demand: int = 0
    compute_demand: int = 0
    transform_tag: str = ""
    # Exec name of the whole service; only set on service heads so the agent
    # hosting a head can start the tree on its own.
    tree: str | None = None


@dataclass(frozen=True)
class ChartSegment:
    label: str
    microservices: tuple[MicroserviceDescriptor, ...]
    data: str

    @property
    def elements(self) -> list[str]:
        return [m.id for m in self.microservices] + [self.data]


@dataclass(frozen=True)
class ServiceChart:
    head: MicroserviceDescriptor
    segments: tuple[ChartSegment, ...]

    @property
    def label(self) -> str:
        return self.head.id

    def microservices(self) -> list[MicroserviceDescriptor]:
        """Head first, then every segment's microservices in chart order."""
        out = [self.head]
        for seg in self.segments:
            out.extend(seg.microservices)
        return out

    def validate(self) -> "ServiceChart":
        problems = chart_problems(self)
        if problems:
            raise InvalidChart("; ".join(problems))
        return self


def chart_problems(chart: ServiceChart) -> list[str]:
    problems = []
    if not chart.segments:
        problems.append("chart has no segments")
    seen_labels: set[str] = set()
    seen_ids: set[str] = set()
    for ms in chart.microservices():
        if not is_label(ms.id):
            problems.append(f"invalid microservice id {ms.id!r}")
        if ms.id in seen_ids:
            problems.append(f"duplicate microservice id {ms.id!r}")
        seen_ids.add(ms.id)
        if not isinstance(ms.exec_time, int) or ms.exec_time <= 0:
            problems.append(f"{ms.id}: exec_time must be a positive integer")
        if ms.storage_demand < 0 or ms.compute_demand < 0:
            problems.append(f"{ms.id}: negative resource demand")
    for seg in chart.segments:
        if not is_segment_label(seg.label):
            problems.append(f"invalid segment label {seg.label!r}")
        if seg.label in seen_labels:
            problems.append(f"duplicate segment label {seg.label!r}")
        seen_labels.add(seg.label)
        if not is_label(seg.data):
            problems.append(f"{seg.label}: invalid data name {seg.data!r}")
    return problems


@dataclass(frozen=True)
class ServiceTree:
    """A chart resolved onto agents.

    ``hop_faces[(upstream, downstream)]`` is the face walk the agent running
    ``upstream`` uses to reach the agent holding ``downstream``; the pairs are
    head -> first microservice of each segment, each consecutive pair inside a
    segment, and last microservice -> data. ``entry_faces`` leads from the
    requesting agent to the head.
    """

    chart: ServiceChart
    placement: Mapping[str, str]
    hop_faces: Mapping[tuple[str, str], tuple[int, ...]]
    data_agents: Mapping[str, str] = field(default_factory=dict)
    entry_faces: tuple[int, ...] = ()


def tree_pairs(chart: ServiceChart) -> Iterable[tuple[str, ChartSegment, str, str]]:
    for seg in chart.segments:
        chain = [chart.head.id] + seg.elements
        for up, down in zip(chain, chain[1:]):
            yield seg.label, seg, up, down


def tree_to_name(tree: ServiceTree, command: str | None = "exec", with_entry: bool = True) -> ServiceName:
    segments = []
    for seg in tree.chart.segments:
        chain = [tree.chart.head.id] + seg.elements
        steps = []
        for up, down in zip(chain, chain[1:]):
            try:
                faces = tuple(tree.hop_faces[(up, down)])
            except KeyError:
                raise MissingHop(f"no hop faces for {up} -> {down}") from None
            steps.append(Step(faces, down))
        segments.append(Segment(seg.label, tuple(steps)))
    return ServiceName(
        command=command,
        head=tree.chart.head.id,
        head_face_chain=tuple(tree.entry_faces) if with_entry else (),
        segments=tuple(segments),
    )
