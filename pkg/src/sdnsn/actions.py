"""What a node handler asks the event loop to do.

Agents and the controller never touch the network or the clock directly.
Every handler returns a list of these records and the simulator applies them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

# Pseudo faces local to an agent. APP is the consumer proxy; SELF loops a
# packet back into the agent's own forwarding engine (co-located hops).
APP_FACE = -1
SELF_FACE = -2


@dataclass(frozen=True)
class Send:
    face: int
    packet: Any


@dataclass(frozen=True)
class Timer:
    delay: int
    token: tuple


@dataclass(frozen=True)
class Note:
    """A trace-worthy state change (PIT/PST insertion, install, drop, ...)."""

    kind: str
    name: str = "-"
    face: int | None = None
    ptype: str = "-"
    extra: dict = field(default_factory=dict)


def face_label(face: int | None) -> str:
    if face is None:
        return "-"
    if face == APP_FACE:
        return "app"
    if face == SELF_FACE:
        return "self"
    return str(face)
