"""Per-node protocol state machine.

Handlers take an event plus the current tick and return a list of emissions
(sends, timer requests, local deliveries, drops) without doing any I/O
themselves; the engine owns transmission, timers and bookkeeping. All
iteration that produces emissions runs in ascending node id so a scenario
replays identically every time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .metrics import DiscoveryRecord, MetricsReport
from .protocol import (
    Data,
    Hello,
    NodeId,
    Packet,
    Rerr,
    ReversePathEntry,
    RoutingEntry,
    Rrep,
    Rreq,
    RreqId,
    is_duplicate,
    relay_transform,
)
from .suppression import (
    Connectivity,
    ConnectivityState,
    CounterBased,
    ExpandingRing,
    SelectionView,
    Strategy,
    expanding_ring_next_ttl,
    select_targets,
)


class InvalidDestination(Exception):
    """A node asked to discover a route to itself."""


# --- emissions ------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    to: NodeId
    packet: Packet


@dataclass(frozen=True)
class SetTimer:
    kind: "TimerKind"
    at: int


@dataclass(frozen=True)
class DeliverUp:
    payload_id: int
    src: NodeId


@dataclass(frozen=True)
class Drop:
    packet: Packet
    reason: str


Emission = Send | SetTimer | DeliverUp | Drop


# --- timer kinds ----------------------------------------------------------

@dataclass(frozen=True)
class DiscoveryDeadline:
    dest: NodeId


@dataclass(frozen=True)
class AttemptSweep:
    rreq_id: RreqId


@dataclass(frozen=True)
class RouteSweep:
    pass


@dataclass(frozen=True)
class ForwardDecision:
    rreq_id: RreqId


TimerKind = DiscoveryDeadline | AttemptSweep | RouteSweep | ForwardDecision


@dataclass
class ProtocolConfig:
    hello_interval: int = 10
    hello_timeout: int = 25
    route_lifetime: int = 50
    max_retries: int = 2               # total attempts allowed per discovery
    discovery_deadline: int | None = None   # default: 2 * node_count * hop delay
    attempt_timeout: int | None = None      # default: the discovery deadline
    intermediate_reply: bool = True
    default_ttl: int | None = None          # default: node_count


@dataclass
class _Discovery:
    dest: NodeId
    attempt_index: int
    metrics_rec: DiscoveryRecord
    rreq_id: RreqId | None = None
    deadline_at: int = 0


class Node:
    def __init__(
        self,
        me: NodeId,
        config: ProtocolConfig,
        strategy: Strategy,
        node_count: int,
        metrics: MetricsReport,
        rng: random.Random,
        connectivity: ConnectivityState | None = None,
        position_of: Callable[[NodeId], tuple[float, float] | None] | None = None,
    ):
        self.me = me
        self.config = config
        self.strategy = strategy
        self.node_count = node_count
        self.metrics = metrics
        self.rng = rng
        self.conn = connectivity
        self.position_of = position_of

        self.seq = 0
        self.next_rreq_num = 0
        self.neighbors: dict[NodeId, int] = {}          # neighbor -> last tick heard
        self.routes: dict[NodeId, RoutingEntry] = {}
        self.reverse: dict[RreqId, ReversePathEntry] = {}
        self.seen_rreqs: set[RreqId] = set()
        self.relayed_replies: set[RreqId] = set()
        self.copies_heard: dict[RreqId, int] = {}
        self.held_forwards: dict[RreqId, tuple[Rreq, NodeId]] = {}
        self.pending_discoveries: dict[NodeId, _Discovery] = {}
        self.outbox: dict[NodeId, list[int]] = {}
        self.dest_seq_memory: dict[NodeId, int] = {}

    # -- derived constants

    @property
    def deadline(self) -> int:
        if self.config.discovery_deadline is not None:
            return self.config.discovery_deadline
        return 2 * self.node_count

    @property
    def attempt_timeout(self) -> int:
        if self.conn is not None and self.conn.config.attempt_timeout is not None:
            return self.conn.config.attempt_timeout
        if self.config.attempt_timeout is not None:
            return self.config.attempt_timeout
        return self.deadline

    @property
    def default_ttl(self) -> int:
        return self.config.default_ttl if self.config.default_ttl is not None else self.node_count

    # -- small helpers

    def note_alive(self, neighbor: NodeId, now: int) -> None:
        """Any reception proves the link; HELLO is just the keepalive floor."""
        self.neighbors[neighbor] = now

    def valid_route(self, dest: NodeId, now: int) -> RoutingEntry | None:
        entry = self.routes.get(dest)
        if entry is not None and entry.expires_at > now:
            return entry
        return None

    def _distance_to(self, other: NodeId) -> float | None:
        if self.position_of is None:
            return None
        mine = self.position_of(self.me)
        theirs = self.position_of(other)
        if mine is None or theirs is None:
            return None
        return ((mine[0] - theirs[0]) ** 2 + (mine[1] - theirs[1]) ** 2) ** 0.5

    # -- originating traffic

    def send_data(self, dest: NodeId, payload_id: int, now: int, round_index: int | None = None) -> list[Emission]:
        if dest == self.me:
            return [DeliverUp(payload_id, self.me)]
        route = self.valid_route(dest, now)
        if route is not None:
            route.active = True
            return [Send(route.next_hop, Data(self.me, dest, payload_id))]
        self.outbox.setdefault(dest, []).append(payload_id)
        if dest not in self.pending_discoveries:
            return self.initiate_discovery(dest, now, round_index)
        return []

    def initiate_discovery(self, dest: NodeId, now: int, round_index: int | None = None) -> list[Emission]:
        if dest == self.me:
            raise InvalidDestination(f"node {self.me} cannot discover itself")
        assert dest not in self.pending_discoveries, "discovery already live"
        self.seq += 1
        rec = self.metrics.begin_discovery(self.me, dest, round_index, now)
        disc = _Discovery(dest=dest, attempt_index=1, metrics_rec=rec)
        self.pending_discoveries[dest] = disc
        return self._launch_attempt(disc, now)

    def _launch_attempt(self, disc: _Discovery, now: int) -> list[Emission]:
        rid = RreqId(self.me, self.next_rreq_num)
        self.next_rreq_num += 1
        disc.rreq_id = rid
        disc.deadline_at = now + self.deadline
        self.seen_rreqs.add(rid)

        if isinstance(self.strategy, ExpandingRing):
            ttl = expanding_ring_next_ttl(self.strategy, disc.attempt_index - 1, self.node_count)
        else:
            ttl = self.default_ttl
        rreq = Rreq(
            rreq_id=rid,
            origin=self.me,
            origin_seq=self.seq,
            dest=disc.dest,
            dest_seq_known=self.dest_seq_memory.get(disc.dest),
            hop_count=0,
            ttl=ttl,
        )
        emissions = self._targeted_sends(rreq, previous_hop=None, now=now)
        emissions.append(SetTimer(DiscoveryDeadline(disc.dest), disc.deadline_at))
        return emissions

    def _targeted_sends(self, rreq: Rreq, previous_hop: NodeId | None, now: int) -> list[Emission]:
        """Run the suppression decision and open one attempt per chosen link."""
        candidates = sorted(n for n in self.neighbors if n != previous_hop)
        view = SelectionView(
            dest=rreq.dest,
            previous_hop=previous_hop,
            connectivity=self.conn,
            copies_heard=self.copies_heard.get(rreq.rreq_id, 1),
            distance_to_previous=self._distance_to(previous_hop) if previous_hop is not None else None,
        )
        targets = select_targets(self.strategy, view, candidates, self.rng)
        if len(targets) < len(candidates):
            self.metrics.record("suppressed_forwards", len(candidates) - len(targets))
        emissions: list[Emission] = []
        for t in targets:
            if self.conn is not None:
                self.conn.open_attempt(rreq.dest, t, rreq.rreq_id, now)
            emissions.append(Send(t, rreq))
        if targets and self.conn is not None:
            emissions.append(SetTimer(AttemptSweep(rreq.rreq_id), now + self.attempt_timeout))
        return emissions

    # -- request handling

    def on_rreq(self, rreq: Rreq, frm: NodeId, now: int) -> list[Emission]:
        if rreq.ttl == 0:
            # died in the air: no duplicate marking, no reply even at the target
            return [Drop(rreq, "ttl-expired")]
        if is_duplicate(self.seen_rreqs, rreq):
            self.copies_heard[rreq.rreq_id] = self.copies_heard.get(rreq.rreq_id, 0) + 1
            entry = self.reverse.get(rreq.rreq_id)
            if entry is not None:
                entry.add_sender(frm)
            return [Drop(rreq, "duplicate-rreq")]

        self.seen_rreqs.add(rreq.rreq_id)
        self.copies_heard[rreq.rreq_id] = 1
        self.reverse[rreq.rreq_id] = ReversePathEntry(rreq.rreq_id, [frm], now)

        if rreq.dest == self.me:
            self.seq += 1
            reply = Rrep(origin=rreq.origin, dest=self.me, dest_seq=self.seq, hop_count=0, rreq_id=rreq.rreq_id)
            return [Send(frm, reply)]

        if self.config.intermediate_reply:
            entry = self.valid_route(rreq.dest, now)
            fresh = entry is not None and (
                rreq.dest_seq_known is None or entry.dest_seq >= rreq.dest_seq_known
            )
            if fresh:
                reply = Rrep(
                    origin=rreq.origin,
                    dest=rreq.dest,
                    dest_seq=entry.dest_seq,
                    hop_count=entry.hop_count,
                    rreq_id=rreq.rreq_id,
                )
                return [Send(frm, reply)]

        forwarded = relay_transform(rreq)
        if isinstance(self.strategy, CounterBased):
            # hold one tick so same-wave copies can be counted first
            self.held_forwards[rreq.rreq_id] = (forwarded, frm)
            return [SetTimer(ForwardDecision(rreq.rreq_id), now + 1)]
        return self._targeted_sends(forwarded, previous_hop=frm, now=now)

    def on_forward_decision(self, rreq_id: RreqId, now: int) -> list[Emission]:
        held = self.held_forwards.pop(rreq_id, None)
        if held is None:
            return []
        forwarded, frm = held
        return self._targeted_sends(forwarded, previous_hop=frm, now=now)

    # -- reply handling

    def on_rrep(self, rrep: Rrep, frm: NodeId, now: int, link_is_new: bool = False) -> list[Emission]:
        emissions: list[Emission] = []
        candidate_hops = rrep.hop_count + 1
        current = self.valid_route(rrep.dest, now)
        fresher = (
            current is None
            or rrep.dest_seq > current.dest_seq
            or (rrep.dest_seq == current.dest_seq and candidate_hops < current.hop_count)
        )
        if fresher:
            keep_active = current.active if current is not None else False
            entry = RoutingEntry(
                dest=rrep.dest,
                next_hop=frm,
                hop_count=candidate_hops,
                dest_seq=rrep.dest_seq,
                expires_at=now + self.config.route_lifetime,
                active=keep_active,
            )
            self.routes[rrep.dest] = entry
            emissions.append(SetTimer(RouteSweep(), entry.expires_at))
        known = self.dest_seq_memory.get(rrep.dest)
        if known is None or rrep.dest_seq > known:
            self.dest_seq_memory[rrep.dest] = rrep.dest_seq

        if self.conn is not None:
            credited = self.conn.resolve_attempt(rrep.dest, frm, rrep.rreq_id, success=True)
            if credited and link_is_new:
                self.conn.boost_new_link(rrep.dest, frm)

        if rrep.origin == self.me:
            disc = self.pending_discoveries.pop(rrep.dest, None)
            if disc is not None:
                route = self.valid_route(rrep.dest, now)
                hops = route.hop_count if route is not None else candidate_hops
                self.metrics.resolve_discovery(disc.metrics_rec, now, hops)
                emissions.extend(self._flush_outbox(rrep.dest, now))
            return emissions

        if rrep.rreq_id in self.relayed_replies:
            return emissions
        entry = self.reverse.get(rrep.rreq_id)
        if entry is None:
            emissions.append(Drop(rrep, "no-reverse-path"))
            return emissions
        self.relayed_replies.add(rrep.rreq_id)
        targets = [p for p in entry.previous_hops if p != frm and p in self.neighbors]
        if targets:
            forwarded = relay_transform(rrep)
            emissions.extend(Send(t, forwarded) for t in targets)
        return emissions

    def _flush_outbox(self, dest: NodeId, now: int) -> list[Emission]:
        queued = self.outbox.pop(dest, [])
        if not queued:
            return []
        route = self.valid_route(dest, now)
        if route is None:
            self.outbox[dest] = queued
            return []
        route.active = True
        return [Send(route.next_hop, Data(self.me, dest, pid)) for pid in queued]

    # -- timers

    def on_discovery_timeout(self, dest: NodeId, now: int) -> list[Emission]:
        disc = self.pending_discoveries.get(dest)
        if disc is None or now < disc.deadline_at:
            return []   # resolved earlier, or a newer attempt reset the deadline
        if self.conn is not None and disc.rreq_id is not None:
            self.conn.fail_pending(disc.rreq_id)
        if disc.attempt_index < self.config.max_retries:
            disc.attempt_index += 1
            disc.metrics_rec.attempts = disc.attempt_index
            return self._launch_attempt(disc, now)
        del self.pending_discoveries[dest]
        self.metrics.fail_discovery(disc.metrics_rec, now)
        dropped = self.outbox.pop(dest, [])
        return [Drop(Data(self.me, dest, pid), "discovery-failed") for pid in dropped]

    def on_attempt_sweep(self, rreq_id: RreqId, now: int) -> list[Emission]:
        if self.conn is not None:
            self.conn.fail_pending(rreq_id)
        return []

    def on_route_sweep(self, now: int) -> list[Emission]:
        expired = [dest for dest, e in sorted(self.routes.items()) if e.expires_at <= now]
        emissions: list[Emission] = []
        for dest in expired:
            del self.routes[dest]
            if self.outbox.get(dest) and dest not in self.pending_discoveries:
                emissions.extend(self.initiate_discovery(dest, now))
        return emissions

    # -- liveness and failure

    def on_hello_tick(self, now: int, link_peers: list[NodeId]) -> list[Emission]:
        emissions: list[Emission] = [Send(p, Hello(self.me, self.seq)) for p in sorted(link_peers)]
        cutoff = now - self.config.hello_timeout
        stale = sorted(n for n, last in self.neighbors.items() if last < cutoff)
        for neighbor in stale:
            emissions.extend(self.on_link_break(neighbor, now))
        return emissions

    def on_hello(self, hello: Hello, frm: NodeId, now: int) -> list[Emission]:
        self.neighbors[frm] = now
        return []

    def on_link_break(self, lost: NodeId, now: int) -> list[Emission]:
        self.neighbors.pop(lost, None)
        dead: list[tuple[NodeId, RoutingEntry]] = []
        for dest in sorted(self.routes):
            entry = self.routes[dest]
            if entry.next_hop == lost and entry.expires_at > now:
                dead.append((dest, entry))
        for dest, _ in dead:
            del self.routes[dest]
        emissions: list[Emission] = []
        if dead:
            rerr = Rerr(tuple((dest, entry.dest_seq) for dest, entry in dead))
            emissions.extend(Send(n, rerr) for n in sorted(self.neighbors))
        emissions.extend(self._reinitiate_after_loss(dead, now))
        return emissions

    def on_rerr(self, rerr: Rerr, frm: NodeId, now: int) -> list[Emission]:
        dead: list[tuple[NodeId, RoutingEntry]] = []
        for dest, seq in rerr.unreachable:
            known = self.dest_seq_memory.get(dest)
            if known is None or seq > known:
                self.dest_seq_memory[dest] = seq
            entry = self.routes.get(dest)
            if entry is not None and entry.next_hop == frm and entry.expires_at > now:
                del self.routes[dest]
                dead.append((dest, entry))
        emissions: list[Emission] = []
        if dead:
            # only routes actually lost here propagate further
            onward = Rerr(tuple((dest, entry.dest_seq) for dest, entry in dead))
            emissions.extend(Send(n, onward) for n in sorted(self.neighbors) if n != frm)
        emissions.extend(self._reinitiate_after_loss(dead, now))
        return emissions

    def _reinitiate_after_loss(self, dead: list[tuple[NodeId, RoutingEntry]], now: int) -> list[Emission]:
        emissions: list[Emission] = []
        for dest, entry in dead:
            wants_route = entry.active or bool(self.outbox.get(dest))
            if wants_route and dest not in self.pending_discoveries and dest != self.me:
                emissions.extend(self.initiate_discovery(dest, now))
        return emissions

    # -- payload forwarding

    def on_data(self, data: Data, frm: NodeId, now: int) -> list[Emission]:
        if data.dst == self.me:
            return [DeliverUp(data.payload_id, data.src)]
        route = self.valid_route(data.dst, now)
        if route is None:
            return [Drop(data, "no-route")]
        return [Send(route.next_hop, data)]
