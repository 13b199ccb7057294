"""Named service networking: an NDN-style data plane that executes chains of
microservices addressed by hierarchical names, a controller that places and
installs them, and a deterministic simulator to run the two together."""

from .names import (
    ChartSegment,
    MicroserviceDescriptor,
    ServiceChart,
    ServiceName,
    ServiceTree,
    parse_name,
    rewrite_for_children,
    serialize_name,
    tree_to_name,
)
from .packets import DataPacket, DeployPacket, InterestPacket, decode_packet, encode_packet
from .agent import Agent
from .controller import Controller
from .simnet import Simulator, Topology, trace_digest
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Agent", "ChartSegment", "Controller", "DataPacket", "DeployPacket", "InterestPacket",
    "MicroserviceDescriptor", "Scenario", "ServiceChart", "ServiceName", "ServiceTree",
    "Simulator", "Topology", "decode_packet", "encode_packet", "load_scenario", "parse_name",
    "rewrite_for_children", "serialize_name", "trace_digest", "tree_to_name",
]
