"""Packet formats and the pure helpers that act on them.

Nodes are integers (their index in the scenario's node list, which also fixes
every deterministic tie-break). All packets are frozen dataclasses so they can
sit in event queues and duplicate-detection sets without defensive copying.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Union

NodeId = int
SeqNum = int


class NotRelayable(Exception):
    """Raised when a packet cannot legally be forwarded another hop."""


class RreqId(NamedTuple):
    origin: NodeId
    num: int


@dataclass(frozen=True)
class Rreq:
    rreq_id: RreqId
    origin: NodeId
    origin_seq: SeqNum
    dest: NodeId
    dest_seq_known: SeqNum | None
    hop_count: int
    ttl: int


@dataclass(frozen=True)
class Rrep:
    origin: NodeId          # the node that asked
    dest: NodeId            # the node that was found
    dest_seq: SeqNum
    hop_count: int          # hops from the replier; +1 per relay
    rreq_id: RreqId


@dataclass(frozen=True)
class Rerr:
    # (destination, last known sequence) pairs that became unreachable
    unreachable: tuple[tuple[NodeId, SeqNum], ...]


@dataclass(frozen=True)
class Hello:
    sender: NodeId
    seq: SeqNum


@dataclass(frozen=True)
class Data:
    src: NodeId
    dst: NodeId
    payload_id: int


Packet = Union[Rreq, Rrep, Rerr, Hello, Data]


@dataclass
class RoutingEntry:
    dest: NodeId
    next_hop: NodeId
    hop_count: int
    dest_seq: SeqNum
    expires_at: int
    active: bool = False    # set when the owning node originates data over it


@dataclass
class ReversePathEntry:
    """Where copies of one request arrived from.

    previous_hops keeps arrival order; the head is the first (primary) sender.
    A reply is forwarded to every recorded sender except the one it came from.
    """

    rreq_id: RreqId
    previous_hops: list[NodeId]
    created_at: int

    def add_sender(self, sender: NodeId) -> None:
        if sender not in self.previous_hops:
            self.previous_hops.append(sender)


def is_duplicate(seen: set[RreqId], packet: Rreq) -> bool:
    """True when this request id was already processed by the node."""
    if not isinstance(packet, Rreq):
        raise TypeError(f"duplicate check only applies to route requests, got {type(packet).__name__}")
    return packet.rreq_id in seen


def relay_transform(packet: Rreq | Rrep) -> Rreq | Rrep:
    """One-hop forwarding transform: requests burn TTL, replies grow hop count."""
    if isinstance(packet, Rreq):
        if packet.ttl < 1:
            raise NotRelayable("request TTL exhausted")
        return replace(packet, hop_count=packet.hop_count + 1, ttl=packet.ttl - 1)
    if isinstance(packet, Rrep):
        return replace(packet, hop_count=packet.hop_count + 1)
    raise TypeError(f"only requests and replies are relayed, got {type(packet).__name__}")


def packet_kind(packet: Packet) -> str:
    return type(packet).__name__.upper()


def summarize(packet: Packet) -> str:
    """Compact single-token description used in trace output."""
    if isinstance(packet, Rreq):
        rid = f"{packet.rreq_id.origin}:{packet.rreq_id.num}"
        return f"RREQ[{rid}] dest={packet.dest} hop={packet.hop_count} ttl={packet.ttl}"
    if isinstance(packet, Rrep):
        rid = f"{packet.rreq_id.origin}:{packet.rreq_id.num}"
        return f"RREP[{rid}] dest={packet.dest} hop={packet.hop_count} seq={packet.dest_seq}"
    if isinstance(packet, Rerr):
        dests = ",".join(str(d) for d, _ in packet.unreachable)
        return f"RERR[{dests}]"
    if isinstance(packet, Hello):
        return f"HELLO from={packet.sender}"
    return f"DATA {packet.src}->{packet.dst} id={packet.payload_id}"
