"""NSN agent: PIT, PST, data store, microservice repository and the
named-service forwarding engine.

An agent is a single-threaded state machine. The simulator calls
:meth:`Agent.receive`, :meth:`Agent.fire` and :meth:`Agent.submit_local_request`;
each returns the :mod:`sdnsn.actions` records the call produced.

Exec forwarding never consults a routing table. A received exec name either
starts with a face token (cross that face, consuming the token) or with an
element that is a local microservice or a local data object.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .actions import APP_FACE, SELF_FACE, Note, Send, Timer
from .errors import UnknownDeadline
from .names import (
    MONITOR_NAME,
    MicroserviceDescriptor,
    ServiceName,
    check_label,
    lookup_name,
    parse_name,
    retrieve_name,
    rewrite_for_children,
)
from .packets import AgentStatus, DataPacket, DeployPacket, InterestPacket, Neighbor

log = logging.getLogger(__name__)

ERROR_MARKER = b"!error:"


@dataclass
class PitEntry:
    name: ServiceName
    in_faces: set[int]
    nonces: set[int]
    created_at: int
    generation: int
    # Held by a local execution; released when the result is sent.
    pinned: bool = False

    @property
    def result_key(self) -> str:
        return str(self.name.result_name())


@dataclass
class PstEntry:
    awaited_name: str
    waiting_microservices: list[tuple[str, str]]
    created_at: int


@dataclass
class DataStoreEntry:
    name: str
    payload: bytes
    stored_at: int
    freshness: int | None = None
    origin: bool = False

    def fresh(self, now: int) -> bool:
        return self.freshness is None or self.stored_at + self.freshness >= now


@dataclass
class Job:
    id: int
    ms: MicroserviceDescriptor
    origin: str
    result: ServiceName
    inputs: list[str]
    received: dict[str, bytes] = field(default_factory=dict)

    @property
    def ready(self) -> bool:
        return all(i in self.received for i in self.inputs)


@dataclass
class Request:
    id: int
    head: str
    executiontime: int
    issued_at: int
    state: str = "lookup"
    completed_at: int | None = None
    payload: bytes | None = None

    @property
    def latency(self) -> int | None:
        return None if self.completed_at is None else self.completed_at - self.issued_at


@dataclass
class MonitorRound:
    serial: int
    nonce: int
    appended: bool = False


def run_microservice(ms: MicroserviceDescriptor, inputs: Iterable[tuple[str, bytes]]) -> bytes:
    """Deterministic stand-in for executing ``ms`` on ``inputs``.

    The output records the transform tag, the input names in order and a
    64-bit BLAKE2b digest of the concatenated input payloads.
    """
    inputs = list(inputs)
    h = hashlib.blake2b(digest_size=8)
    for _, payload in inputs:
        h.update(payload)
    doc = {"tag": ms.transform_tag, "inputs": [n for n, _ in inputs], "digest": h.hexdigest()}
    return json.dumps(doc, separators=(",", ":")).encode()


def _emitting(fn):
    """Collect the actions produced by ``fn`` and by any work it queued locally."""

    @functools.wraps(fn)
    def wrapper(self, *args, **kwargs):
        if self._out is not None:
            fn(self, *args, **kwargs)
            return None
        self._out = []
        try:
            fn(self, *args, **kwargs)
            self._drain()
            return self._out
        finally:
            self._out = None

    return wrapper


class Agent:
    def __init__(
        self,
        agent_id: str,
        faces: dict[int, tuple[str, int]] | None = None,
        *,
        battery: int = 100,
        storage_total: int = 0,
        compute_total: int = 0,
        data_items: Iterable[tuple[str, bytes, int | None]] = (),
        controller_face: int | None = None,
        pit_lifetime: int = 40,
        monitor_lifetime: int = 1000,
        rng: random.Random | None = None,
        exec_time_hints: dict[str, int] | None = None,
    ):
        self.id = check_label(agent_id, "agent id")
        self.faces = dict(faces or {})
        self.battery = battery
        self.storage_total = storage_total
        self.storage_free = storage_total
        self.compute_total = compute_total
        self.compute_free = compute_total
        self.controller_face = controller_face
        self.pit_lifetime = pit_lifetime
        self.monitor_lifetime = monitor_lifetime
        self.rng = rng or random.Random(agent_id)
        self.exec_time_hints = dict(exec_time_hints or {})

        self.now = 0
        self.pit: dict[str, PitEntry] = {}
        self.pst: dict[str, PstEntry] = {}
        self.store: dict[str, DataStoreEntry] = {}
        self.repository: dict[str, MicroserviceDescriptor] = {}
        self.requests: dict[int, Request] = {}
        self.flags: set[str] = set()
        self.cache_hits = 0

        for name, payload, freshness in data_items:
            key = "/" + check_label(name, "data name")
            self.store[key] = DataStoreEntry(key, payload, 0, freshness, origin=True)

        self._seen: set[int] = set()
        self._jobs: dict[int, Job] = {}
        self._jobs_by_origin: dict[str, Job] = {}
        self._app_wait: dict[str, list[tuple[str, object]]] = {}
        self._monitor: MonitorRound | None = None
        self._counter = 0
        self._queue: deque = deque()
        self._out: list | None = None

    # -- plumbing ------------------------------------------------------------

    def _next(self) -> int:
        self._counter += 1
        return self._counter

    def _nonce(self) -> int:
        return self.rng.getrandbits(64)

    def _note(self, kind, name="-", face=None, ptype="-", **extra):
        self._out.append(Note(kind, str(name), face, ptype, extra))

    def _send(self, face: int, packet) -> None:
        if face in (APP_FACE, SELF_FACE):
            ptype = "interest" if isinstance(packet, InterestPacket) else "data"
            self._note("send", packet.name, face, ptype)
            self._queue.append((face, packet))
        else:
            self._out.append(Send(face, packet))

    def _drain(self) -> None:
        while self._queue:
            face, packet = self._queue.popleft()
            if face == APP_FACE and isinstance(packet, DataPacket):
                self._to_app(packet)
            else:
                self._note("recv", packet.name, face,
                           "interest" if isinstance(packet, InterestPacket) else "data")
                self._dispatch(face, packet)

    def _pit_insert(self, name: ServiceName, face: int, nonce: int, pinned=False,
                    lifetime: int | None = None) -> PitEntry:
        key = str(name)
        entry = PitEntry(name, {face}, {nonce}, self.now, self._next(), pinned)
        self.pit[key] = entry
        self._note("pit-insert", key, face)
        if not pinned:
            self._out.append(Timer(lifetime or self.pit_lifetime, ("pit-expire", key, entry.generation)))
        return entry

    def _pit_send(self, entry: PitEntry, packet, skip: int | None = None) -> None:
        for f in sorted(entry.in_faces):
            if f != skip:
                self._send(f, packet)

    def _store_get(self, key: str) -> DataStoreEntry | None:
        entry = self.store.get(key)
        if entry is not None and entry.fresh(self.now):
            return entry
        return None

    def status(self) -> AgentStatus:
        return AgentStatus(
            agent_id=self.id,
            battery=self.battery,
            storage_free=self.storage_free,
            compute_free=self.compute_free,
            neighbor_delays=tuple(Neighbor(f, nb, d) for f, (nb, d) in sorted(self.faces.items())),
            storage_total=self.storage_total,
            compute_total=self.compute_total,
            data_names=tuple(sorted(e.name.lstrip("/") for e in self.store.values() if e.origin)),
            flags=tuple(sorted(self.flags)),
        )

    # -- entry points --------------------------------------------------------

    @_emitting
    def receive(self, face: int, packet, now: int):
        self.now = now
        self._dispatch(face, packet)

    def _dispatch(self, face: int, packet) -> None:
        if isinstance(packet, DeployPacket):
            self.handle_deploy(face, packet)
            return
        cmd = packet.name.command
        if isinstance(packet, InterestPacket):
            if cmd == "monitor":
                self.handle_monitor_interest(face, packet)
            elif cmd == "lookup":
                self.handle_lookup_interest(face, packet, self.now)
            elif cmd == "retrieve":
                self.handle_retrieve_interest(face, packet)
            elif packet.name.is_exec:
                self.handle_exec_interest(face, packet)
            else:
                self._note("drop", packet.name, face, "interest", reason="unhandled-command")
        elif cmd == "monitor":
            self.handle_monitor_data(face, packet)
        else:
            self.handle_data(face, packet)

    @_emitting
    def fire(self, token: tuple, now: int):
        self.now = now
        kind = token[0]
        if kind == "pit-expire":
            _, key, gen = token
            entry = self.pit.get(key)
            if entry is not None and entry.generation == gen and not entry.pinned:
                del self.pit[key]
                self._note("pit-expire", key)
        elif kind == "exec-done":
            self._finish_job(token[1])
        elif kind == "lookup-timeout":
            self._lookup_timeout(token[1])
        elif kind == "monitor-report":
            self._monitor_report(token[1])

    # -- monitoring ----------------------------------------------------------

    @_emitting
    def handle_monitor_interest(self, face: int, i: InterestPacket):
        if i.nonce in self._seen:
            self._note("drop", i.name, face, "interest", reason="duplicate-nonce")
            return
        self._seen.add(i.nonce)
        self._monitor = MonitorRound(self._next(), i.nonce)
        self._pit_insert(i.name, face, i.nonce, lifetime=self.monitor_lifetime)
        outs = sorted(f for f in self.faces if f != face)
        if not outs:
            self._monitor.appended = True
            self._send(face, DataPacket(i.name, status_list=(self.status(),)))
            return
        for f in outs:
            self._send(f, InterestPacket(i.name, i.nonce, i.hop_count + 1))
        # Branches whose Interests were all suppressed as duplicates never
        # answer; report alone once the nearest answers are overdue.
        wait = 2 * max(self.faces[f][1] for f in outs) + 1
        self._out.append(Timer(wait, ("monitor-report", self._monitor.serial)))

    def _monitor_report(self, serial: int) -> None:
        rnd = self._monitor
        entry = self.pit.get(str(MONITOR_NAME))
        if rnd is None or rnd.serial != serial or rnd.appended or entry is None:
            return
        rnd.appended = True
        self._pit_send(entry, DataPacket(MONITOR_NAME, status_list=(self.status(),)))

    @_emitting
    def handle_monitor_data(self, face: int, d: DataPacket):
        entry = self.pit.get(str(d.name))
        if entry is None:
            self._note("drop", d.name, face, "data", reason="no-pit-entry")
            return
        statuses = tuple(d.status_list or ())
        if self._monitor is not None and not self._monitor.appended:
            self._monitor.appended = True
            statuses += (self.status(),)
        if not statuses:
            return
        self._pit_send(entry, DataPacket(d.name, d.payload, statuses), skip=face)

    # -- consumer proxy, lookup and retrieval -------------------------------

    @_emitting
    def submit_local_request(self, head: str, executiontime: int, now: int):
        self.now = now
        check_label(head, "service head")
        if executiontime <= 0:
            raise UnknownDeadline(f"executiontime must be positive, got {executiontime}")
        req = Request(self._next(), head, executiontime, now)
        self.requests[req.id] = req
        self._note("request", "/" + head, APP_FACE, req=req.id, executiontime=executiontime)

        ms = self.repository.get(head)
        if ms is not None and ms.tree:
            req.state = "exec"
            self._start_exec(req, parse_name(ms.tree))
            return
        name = lookup_name(head, executiontime, now)
        self._app_wait.setdefault(str(name), []).append(("request", req.id))
        hint = self.exec_time_hints.get(head, executiontime)
        self._out.append(Timer(2 * hint, ("lookup-timeout", req.id)))
        self._send(APP_FACE, InterestPacket(name, self._nonce()))

    def _start_exec(self, req: Request, name: ServiceName) -> None:
        self._app_wait.setdefault(str(name.result_name()), []).append(("request", req.id))
        self._send(APP_FACE, InterestPacket(name, self._nonce()))

    def _lookup_timeout(self, req_id: int) -> None:
        req = self.requests.get(req_id)
        if req is None or req.state != "lookup":
            return
        req.state = "retrieve"
        name = retrieve_name(req.head, self.id)
        self._app_wait.setdefault(str(name), []).append(("retrieve", req.id))
        self._send(APP_FACE, InterestPacket(name, self._nonce()))

    def _complete(self, req: Request, payload: bytes, name) -> None:
        if req.completed_at is not None or req.state == "failed":
            return
        req.state = "done"
        req.completed_at = self.now
        req.payload = payload
        self._note("deliver", name, APP_FACE, "data", req=req.id, latency=req.latency)

    def _to_app(self, d: DataPacket) -> None:
        key = str(d.name)
        waiters = self._app_wait.pop(key, [])
        self._note("app-recv", key, APP_FACE, "data")
        for kind, ref in waiters:
            if kind == "request":
                self._complete(self.requests[ref], d.payload, key)
            elif kind == "retrieve":
                req = self.requests[ref]
                if req.state != "retrieve":
                    continue
                if d.payload.startswith(ERROR_MARKER):
                    req.state = "failed"
                    self._note("request-failed", key, APP_FACE, req=req.id,
                               reason=d.payload[len(ERROR_MARKER):].decode())
                    continue
                req.state = "exec"
                self._start_exec(req, parse_name(d.payload.decode()))
            elif kind == "lookup":
                entry = self.pit.pop(ref, None)
                if entry is not None:
                    self._note("pit-remove", ref)
                    self._pit_send(entry, DataPacket(entry.name, d.payload))

    @_emitting
    def handle_lookup_interest(self, face: int, i: InterestPacket, now: int):
        self.now = now
        if i.nonce in self._seen:
            self._note("drop", i.name, face, "interest", reason="duplicate-nonce")
            return
        self._seen.add(i.nonce)
        key = str(i.name)
        ms = self.repository.get(i.name.head)
        if ms is not None and ms.tree:
            meta = i.name.lookup_meta
            delay = now - meta.triggeringtime
            if ms.exec_time + delay < meta.executiontime:
                self._pit_insert(i.name, face, i.nonce, pinned=True)
                self._note("lookup-hit", key, face, delay=delay)
                tree = parse_name(ms.tree)
                self._app_wait.setdefault(str(tree.result_name()), []).append(("lookup", key))
                self._send(APP_FACE, InterestPacket(tree, self._nonce()))
            else:
                self._note("drop", key, face, "interest", reason="deadline")
            return
        if key in self.pit:
            self.pit[key].in_faces.add(face)
            self.pit[key].nonces.add(i.nonce)
            return
        outs = sorted(f for f in self.faces if f != face)
        if not outs:
            self._note("drop", key, face, "interest", reason="unforwardable")
            return
        self._pit_insert(i.name, face, i.nonce)
        for f in outs:
            self._send(f, InterestPacket(i.name, i.nonce, i.hop_count + 1))

    @_emitting
    def handle_retrieve_interest(self, face: int, i: InterestPacket):
        if i.nonce in self._seen:
            self._note("drop", i.name, face, "interest", reason="duplicate-nonce")
            return
        self._seen.add(i.nonce)
        key = str(i.name)
        if key in self.pit:
            self.pit[key].in_faces.add(face)
            return
        if self.controller_face is not None and face != self.controller_face:
            outs = [self.controller_face]
        else:
            outs = sorted(f for f in self.faces if f != face)
        if not outs:
            self._note("drop", key, face, "interest", reason="unforwardable")
            return
        self._pit_insert(i.name, face, i.nonce)
        for f in outs:
            self._send(f, InterestPacket(i.name, i.nonce, i.hop_count + 1))

    # -- service forwarding --------------------------------------------------

    @_emitting
    def handle_exec_interest(self, face: int, i: InterestPacket):
        name, key = i.name, str(i.name)
        if i.nonce in self._seen:
            self._note("drop", key, face, "interest", reason="duplicate-nonce")
            return
        self._seen.add(i.nonce)

        if name.leading_face() is not None:
            if key in self.pit:
                self.pit[key].in_faces.add(face)
                return
            out, rest = name.pop_leading_face()
            if out not in self.faces:
                self._note("drop", key, face, "interest", reason="no-such-face")
                return
            self._pit_insert(name, face, i.nonce)
            self._send(out, InterestPacket(rest, i.nonce, i.hop_count + 1))
            return

        element = name.first_element()
        ms = self.repository.get(element)
        if ms is None:
            hit = self._store_get(str(name.result_name()))
            if hit is None:
                log.info("%s: unknown microservice %s", self.id, element)
                self._note("drop", key, face, "interest", reason="unknown-microservice")
                return
            self._count_hit(hit)
            self._send(face, DataPacket(name.result_name(), hit.payload))
            return

        if key in self.pit:
            self.pit[key].in_faces.add(face)
            return
        self._pit_insert(name, face, i.nonce, pinned=True)
        children = rewrite_for_children(name, element)
        job = Job(self._next(), ms, key, name.result_name(),
                  [str(child.result_name()) for _, child in children])
        self._jobs[job.id] = job
        self._jobs_by_origin[key] = job
        for inp in job.inputs:
            hit = self._store_get(inp)
            if hit is not None:
                self._count_hit(hit)
                job.received[inp] = hit.payload
        if job.ready:
            self._start_job(job)
            return
        for (out, child), inp in zip(children, job.inputs):
            if inp in job.received:
                continue
            pending = self.pst.get(inp)
            if pending is None:
                self.pst[inp] = PstEntry(inp, [(ms.id, key)], self.now)
                self._note("pst-insert", inp, ms=ms.id)
                self._send(SELF_FACE if out is None else out, InterestPacket(child, self._nonce()))
            elif (ms.id, key) not in pending.waiting_microservices:
                pending.waiting_microservices.append((ms.id, key))
                self._note("pst-insert", inp, ms=ms.id)

    def _count_hit(self, entry: DataStoreEntry) -> None:
        if not entry.origin:
            self.cache_hits += 1
        self._note("cache-hit" if not entry.origin else "store-hit", entry.name)

    def _start_job(self, job: Job) -> None:
        self._note("exec-start", job.result, ms=job.ms.id)
        self._out.append(Timer(job.ms.exec_time, ("exec-done", job.id)))

    def _finish_job(self, job_id: int) -> None:
        job = self._jobs.pop(job_id)
        self._jobs_by_origin.pop(job.origin, None)
        payload = run_microservice(job.ms, [(n, job.received[n]) for n in job.inputs])
        self._note("exec-done", job.result, ms=job.ms.id)
        entry = self.pit.pop(job.origin, None)
        if entry is None:
            self._note("drop", job.result, None, "data", reason="no-pit-entry")
            return
        self._note("pit-remove", job.origin)
        self._pit_send(entry, DataPacket(job.result, payload))

    @_emitting
    def handle_data(self, face: int, d: DataPacket):
        key = str(d.name)
        matches = [k for k, e in self.pit.items() if not e.pinned and e.result_key == key]
        pst = self.pst.pop(key, None)
        if not matches and pst is None:
            self._note("drop", key, face, "data", reason="unsolicited")
            return
        self.store[key] = DataStoreEntry(key, d.payload, self.now)
        for k in matches:
            entry = self.pit.pop(k)
            self._note("pit-remove", k)
            self._pit_send(entry, d, skip=face)
        if pst is None:
            return
        self._note("pst-remove", key)
        for _, origin in pst.waiting_microservices:
            job = self._jobs_by_origin.get(origin)
            if job is None:
                continue
            job.received[key] = d.payload
            if job.ready:
                self._start_job(job)

    # -- deployment ----------------------------------------------------------

    @_emitting
    def handle_deploy(self, face: int, p: DeployPacket):
        ms = p.microservice
        if p.route:
            out = p.route[0]
            if out not in self.faces:
                self._note("drop", f"/sd-nsn/deploy/{ms.id}", face, "deploy", reason="no-such-face")
                return
            self._send(out, DeployPacket(p.route[1:], p.target, ms))
            return
        if p.target != self.id:
            log.warning("%s: deploy for %s misrouted", self.id, p.target)
            self._note("drop", f"/sd-nsn/deploy/{ms.id}", face, "deploy", reason="target-mismatch")
            return
        if ms.id in self.repository:
            self.repository[ms.id] = ms
            self._note("install", f"/sd-nsn/deploy/{ms.id}", face, "deploy", duplicate=1)
            return
        if self.storage_free < ms.storage_demand:
            self.flags.add(f"insufficient-storage:{ms.id}")
            self._note("drop", f"/sd-nsn/deploy/{ms.id}", face, "deploy", reason="insufficient-storage")
            return
        self.repository[ms.id] = ms
        self.storage_free -= ms.storage_demand
        self.compute_free = max(0, self.compute_free - ms.compute_demand)
        self.exec_time_hints[ms.id] = ms.exec_time
        self._note("install", f"/sd-nsn/deploy/{ms.id}", face, "deploy")

    # -- inspection ----------------------------------------------------------

    def quiescent(self) -> bool:
        """True when no service execution is pending on this agent."""
        return not self.pst and not self._jobs
