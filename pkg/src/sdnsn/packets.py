"""Interest, Data and Deploy packets and their TLV wire encoding.

Every TLV is ``type (1 octet) | length (unsigned LEB128 varint) | value``.
Integers inside a value are unsigned LEB128 varints, strings are UTF-8.

Outer types: Interest 0x05, Data 0x06, Deploy 0x44. The inner type numbers
are listed in the ``T_*`` constants below; ``docs/packet-format.md`` has the
full layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import MalformedName, MalformedTlv, TruncatedPacket, UnknownType
from .names import MicroserviceDescriptor, ServiceName, name_from_components

T_INTEREST = 0x05
T_DATA = 0x06
T_DEPLOY = 0x44

T_NAME = 0x07
T_COMPONENT = 0x08
T_NONCE = 0x0A
T_HOP_COUNT = 0x22
T_CONTENT = 0x15
T_SIGNATURE = 0x17
T_STATUS_LIST = 0x80

T_STATUS = 0x81
T_AGENT_ID = 0x82
T_BATTERY = 0x83
T_STORAGE_FREE = 0x84
T_COMPUTE_FREE = 0x85
T_NEIGHBOR = 0x86
T_FACE = 0x87
T_DELAY = 0x88
T_STORAGE_TOTAL = 0x89
T_DATA_NAME = 0x8A
T_FLAG = 0x8B
T_COMPUTE_TOTAL = 0x8C

T_FACE_CHAIN = 0x45
T_ROUTE_FACE = 0x46
T_TARGET = 0x47
T_MICROSERVICE = 0x48
T_MS_ID = 0x49
T_EXEC_TIME = 0x4A
T_STORAGE_DEMAND = 0x4B
T_COMPUTE_DEMAND = 0x4C
T_TRANSFORM_TAG = 0x4D
T_TREE = 0x4E

SIGNATURE_PLACEHOLDER = bytes(8)


@dataclass(frozen=True)
class Neighbor:
    face: int
    agent_id: str
    delay: int


@dataclass(frozen=True)
class AgentStatus:
    agent_id: str
    battery: int
    storage_free: int
    compute_free: int
    neighbor_delays: tuple[Neighbor, ...] = ()
    storage_total: int = 0
    compute_total: int = 0
    data_names: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class InterestPacket:
    name: ServiceName
    nonce: int = 0
    hop_count: int = 0


@dataclass(frozen=True)
class DataPacket:
    name: ServiceName
    payload: bytes = b""
    status_list: tuple[AgentStatus, ...] | None = None
    signature: bytes = SIGNATURE_PLACEHOLDER


@dataclass(frozen=True)
class DeployPacket:
    """Source-routed microservice installation.

    ``route`` holds the faces still to cross; ``target`` is the agent that
    installs the payload. The header chain is ``route + (target,)``.
    """

    route: tuple[int, ...]
    target: str
    microservice: MicroserviceDescriptor = field(default=None)

    @property
    def face_chain(self) -> tuple:
        return self.route + (self.target,)


Packet = Union[InterestPacket, DataPacket, DeployPacket]


def packet_kind(p: Packet) -> str:
    if isinstance(p, InterestPacket):
        return "interest"
    if isinstance(p, DataPacket):
        return "data"
    return "deploy"


# -- primitives --------------------------------------------------------------


def encode_varint(n: int) -> bytes:
    if n < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, pos: int, end: int) -> tuple[int, int]:
    value = shift = 0
    while True:
        if pos >= end:
            raise TruncatedPacket("varint runs past end of buffer")
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise MalformedTlv("varint too long")


def tlv(t: int, value: bytes) -> bytes:
    return bytes([t]) + encode_varint(len(value)) + value


def tlv_int(t: int, n: int) -> bytes:
    return tlv(t, encode_varint(n))


def tlv_str(t: int, s: str) -> bytes:
    return tlv(t, s.encode("utf-8"))


def iter_tlvs(buf: bytes, start: int = 0, end: int | None = None) -> Iterator[tuple[int, bytes]]:
    pos = start
    end = len(buf) if end is None else end
    while pos < end:
        t = buf[pos]
        length, pos = decode_varint(buf, pos + 1, end)
        if pos + length > end:
            raise TruncatedPacket(f"TLV 0x{t:02x} declares {length} bytes, {end - pos} left")
        yield t, buf[pos:pos + length]
        pos += length


def _int(value: bytes) -> int:
    n, pos = decode_varint(value, 0, len(value))
    if pos != len(value):
        raise MalformedTlv("trailing bytes after varint")
    return n


def _str(value: bytes) -> str:
    try:
        return value.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedTlv(str(exc)) from None


# -- encoding ----------------------------------------------------------------


def encode_name(name: ServiceName) -> bytes:
    return tlv(T_NAME, b"".join(tlv_str(T_COMPONENT, c) for c in name.components()))


def encode_status(s: AgentStatus) -> bytes:
    parts = [
        tlv_str(T_AGENT_ID, s.agent_id),
        tlv_int(T_BATTERY, s.battery),
        tlv_int(T_STORAGE_FREE, s.storage_free),
        tlv_int(T_COMPUTE_FREE, s.compute_free),
        tlv_int(T_STORAGE_TOTAL, s.storage_total),
        tlv_int(T_COMPUTE_TOTAL, s.compute_total),
    ]
    for nb in s.neighbor_delays:
        parts.append(tlv(T_NEIGHBOR, tlv_int(T_FACE, nb.face) + tlv_str(T_AGENT_ID, nb.agent_id)
                         + tlv_int(T_DELAY, nb.delay)))
    parts += [tlv_str(T_DATA_NAME, d) for d in s.data_names]
    parts += [tlv_str(T_FLAG, f) for f in s.flags]
    return tlv(T_STATUS, b"".join(parts))


def encode_microservice(ms: MicroserviceDescriptor) -> bytes:
    parts = [
        tlv_str(T_MS_ID, ms.id),
        tlv_int(T_EXEC_TIME, ms.exec_time),
        tlv_int(T_STORAGE_DEMAND, ms.storage_demand),
        tlv_int(T_COMPUTE_DEMAND, ms.compute_demand),
        tlv_str(T_TRANSFORM_TAG, ms.transform_tag),
    ]
    if ms.tree is not None:
        parts.append(tlv_str(T_TREE, ms.tree))
    return tlv(T_MICROSERVICE, b"".join(parts))


def encode_packet(p: Packet) -> bytes:
    if isinstance(p, InterestPacket):
        body = encode_name(p.name) + tlv_int(T_NONCE, p.nonce) + tlv_int(T_HOP_COUNT, p.hop_count)
        return tlv(T_INTEREST, body)
    if isinstance(p, DataPacket):
        body = encode_name(p.name) + tlv(T_CONTENT, bytes(p.payload))
        if p.status_list is not None:
            body += tlv(T_STATUS_LIST, b"".join(encode_status(s) for s in p.status_list))
        body += tlv(T_SIGNATURE, p.signature)
        return tlv(T_DATA, body)
    if isinstance(p, DeployPacket):
        chain = b"".join(tlv_int(T_ROUTE_FACE, f) for f in p.route) + tlv_str(T_TARGET, p.target)
        return tlv(T_DEPLOY, tlv(T_FACE_CHAIN, chain) + encode_microservice(p.microservice))
    raise TypeError(f"not a packet: {p!r}")


# -- decoding ----------------------------------------------------------------


def _fields(value: bytes, allowed: dict[int, str]) -> dict[int, list[bytes]]:
    """Group inner TLVs by type, rejecting unknown types and enforcing order."""
    out: dict[int, list[bytes]] = {}
    order = list(allowed)
    last = -1
    for t, v in iter_tlvs(value):
        if t not in allowed:
            raise MalformedTlv(f"unexpected TLV type 0x{t:02x}")
        idx = order.index(t)
        if idx < last:
            raise MalformedTlv(f"TLV 0x{t:02x} out of order")
        if allowed[t] != "*" and t in out:
            raise MalformedTlv(f"TLV 0x{t:02x} repeated")
        last = idx
        out.setdefault(t, []).append(v)
    for t, mode in allowed.items():
        if mode == "1" and t not in out:
            raise MalformedTlv(f"missing TLV 0x{t:02x}")
    return out


def decode_name(value: bytes) -> ServiceName:
    comps = []
    for t, v in iter_tlvs(value):
        if t != T_COMPONENT:
            raise MalformedTlv(f"name holds non-component TLV 0x{t:02x}")
        comps.append(_str(v))
    try:
        return name_from_components(comps)
    except MalformedName as exc:
        raise MalformedTlv(f"bad name: {exc}") from None


def decode_status(value: bytes) -> AgentStatus:
    f = _fields(value, {T_AGENT_ID: "1", T_BATTERY: "1", T_STORAGE_FREE: "1", T_COMPUTE_FREE: "1",
                        T_STORAGE_TOTAL: "1", T_COMPUTE_TOTAL: "1", T_NEIGHBOR: "*",
                        T_DATA_NAME: "*", T_FLAG: "*"})
    neighbors = []
    for raw in f.get(T_NEIGHBOR, []):
        nf = _fields(raw, {T_FACE: "1", T_AGENT_ID: "1", T_DELAY: "1"})
        neighbors.append(Neighbor(_int(nf[T_FACE][0]), _str(nf[T_AGENT_ID][0]), _int(nf[T_DELAY][0])))
    return AgentStatus(
        agent_id=_str(f[T_AGENT_ID][0]),
        battery=_int(f[T_BATTERY][0]),
        storage_free=_int(f[T_STORAGE_FREE][0]),
        compute_free=_int(f[T_COMPUTE_FREE][0]),
        neighbor_delays=tuple(neighbors),
        storage_total=_int(f[T_STORAGE_TOTAL][0]),
        compute_total=_int(f[T_COMPUTE_TOTAL][0]),
        data_names=tuple(_str(v) for v in f.get(T_DATA_NAME, [])),
        flags=tuple(_str(v) for v in f.get(T_FLAG, [])),
    )


def decode_microservice(value: bytes) -> MicroserviceDescriptor:
    f = _fields(value, {T_MS_ID: "1", T_EXEC_TIME: "1", T_STORAGE_DEMAND: "1", T_COMPUTE_DEMAND: "1",
                        T_TRANSFORM_TAG: "1", T_TREE: "?"})
    return MicroserviceDescriptor(
        id=_str(f[T_MS_ID][0]),
        exec_time=_int(f[T_EXEC_TIME][0]),
        storage_demand=_int(f[T_STORAGE_DEMAND][0]),
        compute_demand=_int(f[T_COMPUTE_DEMAND][0]),
        transform_tag=_str(f[T_TRANSFORM_TAG][0]),
        tree=_str(f[T_TREE][0]) if T_TREE in f else None,
    )


def decode_packet(buf: bytes) -> Packet:
    buf = bytes(buf)
    if not buf:
        raise TruncatedPacket("empty buffer")
    t = buf[0]
    if t not in (T_INTEREST, T_DATA, T_DEPLOY):
        raise UnknownType(f"unknown packet type 0x{t:02x}")
    length, pos = decode_varint(buf, 1, len(buf))
    if pos + length > len(buf):
        raise TruncatedPacket(f"packet declares {length} bytes, {len(buf) - pos} present")
    if pos + length != len(buf):
        raise MalformedTlv("trailing bytes after packet")
    try:
        return _decode_body(t, buf[pos:])
    except TruncatedPacket as exc:
        # the outer length was satisfied, so an inner overrun is a framing error
        raise MalformedTlv(str(exc)) from None


def _decode_body(t: int, value: bytes) -> Packet:

    if t == T_INTEREST:
        f = _fields(value, {T_NAME: "1", T_NONCE: "1", T_HOP_COUNT: "1"})
        return InterestPacket(decode_name(f[T_NAME][0]), _int(f[T_NONCE][0]), _int(f[T_HOP_COUNT][0]))

    if t == T_DATA:
        f = _fields(value, {T_NAME: "1", T_CONTENT: "1", T_STATUS_LIST: "?", T_SIGNATURE: "1"})
        statuses = None
        if T_STATUS_LIST in f:
            statuses = []
            for st, sv in iter_tlvs(f[T_STATUS_LIST][0]):
                if st != T_STATUS:
                    raise MalformedTlv(f"status list holds TLV 0x{st:02x}")
                statuses.append(decode_status(sv))
            statuses = tuple(statuses)
        return DataPacket(decode_name(f[T_NAME][0]), f[T_CONTENT][0], statuses, f[T_SIGNATURE][0])

    f = _fields(value, {T_FACE_CHAIN: "1", T_MICROSERVICE: "1"})
    route, target = [], None
    for ct, cv in iter_tlvs(f[T_FACE_CHAIN][0]):
        if ct == T_ROUTE_FACE and target is None:
            route.append(_int(cv))
        elif ct == T_TARGET and target is None:
            target = _str(cv)
        else:
            raise MalformedTlv("face chain must be faces followed by exactly one target")
    if target is None:
        raise MalformedTlv("face chain has no target agent")
    return DeployPacket(tuple(route), target, decode_microservice(f[T_MICROSERVICE][0]))
