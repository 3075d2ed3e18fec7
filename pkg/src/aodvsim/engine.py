"""Deterministic discrete-event engine.

Integer ticks; the queue orders events by (tick, insertion sequence), so a
scenario plus a seed fixes the entire run. Transmission, link state, scripted
losses, mobility, metrics and tracing live here; protocol behavior lives in
the per-node state machines.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, replace
from typing import TextIO

from .metrics import MetricsReport
from .node import (
    AttemptSweep,
    DeliverUp,
    DiscoveryDeadline,
    Drop,
    ForwardDecision,
    Node,
    RouteSweep,
    Send,
    SetTimer,
    TimerKind,
)
from .protocol import Data, Hello, NodeId, Packet, Rerr, Rrep, Rreq, summarize
from .scenario import RandomWaypoint, Scenario
from .suppression import Connectivity, ConnectivityState


# --- engine events --------------------------------------------------------

@dataclass(frozen=True)
class Deliver:
    to: NodeId
    frm: NodeId
    packet: Packet


@dataclass(frozen=True)
class Timer:
    node: NodeId
    kind: TimerKind


@dataclass(frozen=True)
class HelloTick:
    node: NodeId


@dataclass(frozen=True)
class Inject:
    node: NodeId
    dest: NodeId
    payload_id: int
    round_index: int


@dataclass(frozen=True)
class LinkChange:
    kind: str       # "link_up" | "link_down"
    a: NodeId
    b: NodeId


@dataclass(frozen=True)
class MobilityTick:
    pass


Event = Deliver | Timer | HelloTick | Inject | LinkChange | MobilityTick

# protocol activity that still being queued at t_max means the run was cut short
_TRUNCATION_TIMERS = (DiscoveryDeadline, AttemptSweep, ForwardDecision)


@dataclass
class _Motion:
    pos: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float
    pause_left: int


class Engine:
    def __init__(self, scenario: Scenario, trace: TextIO | None = None):
        scenario.validate()
        self.scenario = scenario
        self.trace = trace
        self.now = 0
        self.metrics = MetricsReport()
        self.rng = random.Random(scenario.seed)
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = itertools.count()

        # link state: current set plus the configured delay for every known pair
        self.base_delay: dict[frozenset, int] = {}
        self.live_links: dict[frozenset, int] = {}
        for a, b, delay in scenario.links_by_id():
            key = frozenset((a, b))
            self.base_delay[key] = delay
            self.live_links[key] = delay
        self.new_links: set[frozenset] = set()
        self.loss_filter = {
            (ev.at, scenario.id_of(ev.frm), scenario.id_of(ev.to))
            for ev in scenario.drop_events
        }

        self.positions: dict[NodeId, tuple[float, float]] = dict(scenario.positions())
        self._motion: dict[NodeId, _Motion] | None = None
        if isinstance(scenario.mobility, RandomWaypoint):
            self._init_mobility(scenario.mobility)

        self.nodes: list[Node] = []
        for i in range(scenario.node_count):
            conn = None
            if isinstance(scenario.strategy, Connectivity):
                conn = ConnectivityState(scenario.strategy.config,
                                         scenario.per_neighbor_aggregate)
            params = replace(scenario.params,
                             intermediate_reply=scenario.intermediate_reply)
            self.nodes.append(Node(
                me=i,
                config=params,
                strategy=scenario.strategy,
                node_count=scenario.node_count,
                metrics=self.metrics,
                rng=self.rng,
                connectivity=conn,
                position_of=self.positions.get if self.positions else None,
            ))
        for key in self.live_links:
            a, b = sorted(key)
            self.nodes[a].neighbors[b] = 0
            self.nodes[b].neighbors[a] = 0

        # scripted events first so same-tick ordering favors topology changes,
        # then traffic, then the recurring ticks
        for ev in scenario.link_events:
            self._push(ev.at, LinkChange(ev.kind, scenario.id_of(ev.a), scenario.id_of(ev.b)))
        payload = itertools.count()
        for flow in scenario.traffic:
            for r in range(flow.rounds):
                at = flow.start + r * flow.spacing
                self._push(at, Inject(scenario.id_of(flow.origin),
                                      scenario.id_of(flow.dest), next(payload), r))
        for i in range(scenario.node_count):
            self._push(0, HelloTick(i))
        if self._motion is not None:
            self._push(1, MobilityTick())

    # -- infrastructure

    def _push(self, at: int, event: Event) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), event))

    def _trace(self, node: NodeId | None, kind: str, detail: str = "") -> None:
        if self.trace is not None:
            label = "-" if node is None else self.scenario.label_of(node)
            self.trace.write(f"{self.now}\t{label}\t{kind}\t{detail}\n")

    def _init_mobility(self, spec: RandomWaypoint) -> None:
        self._mobility_spec = spec
        self._mobility_rng = random.Random(self.scenario.seed ^ 0x5F5E1)
        rng = self._mobility_rng
        w, h = spec.area
        self._motion = {}
        for i in range(self.scenario.node_count):
            pos = self.positions.get(i) or (rng.uniform(0, w), rng.uniform(0, h))
            self.positions[i] = pos
            self._motion[i] = _Motion(
                pos=pos,
                waypoint=(rng.uniform(0, w), rng.uniform(0, h)),
                speed=rng.uniform(*spec.speed),
                pause_left=0,
            )
        # under mobility the link set is purely position-derived
        self.live_links = {}
        self._recompute_links()

    # -- link handling

    def apply_link_event(self, kind: str, a: NodeId, b: NodeId) -> None:
        """Engine-level topology change; nodes only notice via HELLO silence."""
        key = frozenset((a, b))
        if kind == "link_down":
            self.live_links.pop(key, None)
            self.new_links.discard(key)
        else:
            if key not in self.live_links:
                self.live_links[key] = self.base_delay.get(key, 1)
                self.new_links.add(key)

    def link_peers(self, node: NodeId) -> list[NodeId]:
        peers = []
        for key in self.live_links:
            a, b = sorted(key)
            if a == node:
                peers.append(b)
            elif b == node:
                peers.append(a)
        return sorted(peers)

    def transmit(self, frm: NodeId, to: NodeId, packet: Packet) -> None:
        key = frozenset((frm, to))
        delay = self.live_links.get(key)
        if delay is None:
            self.metrics.record("losses")
            self._trace(frm, "loss", f"link-absent to={self.scenario.label_of(to)}")
            return
        if (self.now, frm, to) in self.loss_filter:
            self.metrics.record("losses")
            self._trace(frm, "loss", f"scripted to={self.scenario.label_of(to)} {summarize(packet)}")
            return
        if isinstance(packet, Rreq):
            self.metrics.record("rreq_tx", node=frm, link=(frm, to))
        elif isinstance(packet, Rrep):
            self.metrics.record("rrep_tx")
        elif isinstance(packet, Rerr):
            self.metrics.record("rerr_tx")
        elif isinstance(packet, Hello):
            self.metrics.record("hello_tx")
        else:
            self.metrics.record("data_tx")
        self._push(self.now + delay, Deliver(to, frm, packet))

    # -- mobility

    def _recompute_links(self) -> None:
        spec = self._mobility_spec
        n = self.scenario.node_count
        wanted = set()
        for i in range(n):
            for j in range(i + 1, n):
                xi, yi = self.positions[i]
                xj, yj = self.positions[j]
                if math.hypot(xi - xj, yi - yj) <= spec.radio_range:
                    wanted.add(frozenset((i, j)))
        for key in sorted(self.live_links.keys() - wanted, key=sorted):
            a, b = sorted(key)
            self.apply_link_event("link_down", a, b)
            self._trace(a, "link-down", f"range {self.scenario.label_of(b)}")
        for key in sorted(wanted - self.live_links.keys(), key=sorted):
            a, b = sorted(key)
            self.apply_link_event("link_up", a, b)
            self._trace(a, "link-up", f"range {self.scenario.label_of(b)}")

    def _advance_motion(self) -> None:
        rng = self._mobility_rng
        spec = self._mobility_spec
        w, h = spec.area
        for i in sorted(self._motion):
            m = self._motion[i]
            if m.pause_left > 0:
                m.pause_left -= 1
                if m.pause_left == 0:
                    m.waypoint = (rng.uniform(0, w), rng.uniform(0, h))
                    m.speed = rng.uniform(*spec.speed)
                continue
            dx = m.waypoint[0] - m.pos[0]
            dy = m.waypoint[1] - m.pos[1]
            dist = math.hypot(dx, dy)
            if dist <= m.speed:
                m.pos = m.waypoint
                m.pause_left = max(1, spec.pause)
            else:
                m.pos = (m.pos[0] + dx / dist * m.speed, m.pos[1] + dy / dist * m.speed)
            self.positions[i] = m.pos

    # -- event dispatch

    def _process(self, event: Event) -> None:
        if isinstance(event, Deliver):
            key = frozenset((event.frm, event.to))
            if key not in self.live_links:
                self._trace(event.to, "deliver-cancelled",
                            f"from={self.scenario.label_of(event.frm)} {summarize(event.packet)}")
                return
            self._trace(event.to, "deliver",
                        f"from={self.scenario.label_of(event.frm)} {summarize(event.packet)}")
            node = self.nodes[event.to]
            node.note_alive(event.frm, self.now)
            pkt = event.packet
            if isinstance(pkt, Rreq):
                emissions = node.on_rreq(pkt, event.frm, self.now)
            elif isinstance(pkt, Rrep):
                fresh = key in self.new_links
                if fresh:
                    self.new_links.discard(key)
                emissions = node.on_rrep(pkt, event.frm, self.now, link_is_new=fresh)
            elif isinstance(pkt, Rerr):
                emissions = node.on_rerr(pkt, event.frm, self.now)
            elif isinstance(pkt, Hello):
                emissions = node.on_hello(pkt, event.frm, self.now)
            else:
                emissions = node.on_data(pkt, event.frm, self.now)
            self._handle_emissions(event.to, emissions)
        elif isinstance(event, Timer):
            self._trace(event.node, "timer", type(event.kind).__name__)
            node = self.nodes[event.node]
            kind = event.kind
            if isinstance(kind, DiscoveryDeadline):
                emissions = node.on_discovery_timeout(kind.dest, self.now)
            elif isinstance(kind, AttemptSweep):
                emissions = node.on_attempt_sweep(kind.rreq_id, self.now)
            elif isinstance(kind, ForwardDecision):
                emissions = node.on_forward_decision(kind.rreq_id, self.now)
            else:
                emissions = node.on_route_sweep(self.now)
            self._handle_emissions(event.node, emissions)
        elif isinstance(event, HelloTick):
            self._trace(event.node, "hello-tick")
            peers = self.link_peers(event.node)
            emissions = self.nodes[event.node].on_hello_tick(self.now, peers)
            self._handle_emissions(event.node, emissions)
            nxt = self.now + self.scenario.params.hello_interval
            if nxt <= self.scenario.t_max:
                self._push(nxt, HelloTick(event.node))
        elif isinstance(event, Inject):
            self._trace(event.node, "inject",
                        f"dest={self.scenario.label_of(event.dest)} round={event.round_index}")
            emissions = self.nodes[event.node].send_data(
                event.dest, event.payload_id, self.now, event.round_index)
            self._handle_emissions(event.node, emissions)
        elif isinstance(event, LinkChange):
            self._trace(event.a, event.kind.replace("_", "-"),
                        self.scenario.label_of(event.b))
            self.apply_link_event(event.kind, event.a, event.b)
        else:  # MobilityTick
            self._advance_motion()
            self._recompute_links()
            if self.now + 1 <= self.scenario.t_max:
                self._push(self.now + 1, MobilityTick())

    def _handle_emissions(self, node: NodeId, emissions) -> None:
        for e in emissions:
            if isinstance(e, Send):
                self.transmit(node, e.to, e.packet)
            elif isinstance(e, SetTimer):
                self._push(max(e.at, self.now), Timer(node, e.kind))
            elif isinstance(e, DeliverUp):
                self._trace(node, "deliver-up",
                            f"payload={e.payload_id} src={self.scenario.label_of(e.src)}")
            elif isinstance(e, Drop):
                self._trace(node, "drop", f"{e.reason} {summarize(e.packet)}")
                if e.reason == "duplicate-rreq":
                    self.metrics.record("redundant_rreq_rx", node=node)

    # -- main loop

    def run(self) -> MetricsReport:
        t_max = self.scenario.t_max
        while self._queue and self._queue[0][0] <= t_max:
            at, _, event = heapq.heappop(self._queue)
            self.now = at
            self._process(event)
        truncated = False
        for _, _, event in self._queue:
            if isinstance(event, Deliver) and not isinstance(event.packet, Hello):
                truncated = True
            elif isinstance(event, Inject):
                truncated = True
            elif isinstance(event, Timer) and isinstance(event.kind, _TRUNCATION_TIMERS):
                truncated = True
        for node in self.nodes:
            for dest in sorted(node.pending_discoveries):
                disc = node.pending_discoveries.pop(dest)
                self.metrics.fail_discovery(disc.metrics_rec, self.now)
                truncated = True
        self.metrics.timed_out = truncated
        return self.metrics

    # -- introspection used by tests and the CLI summary

    def node_by_label(self, label: str) -> Node:
        return self.nodes[self.scenario.id_of(label)]

    def connectivity_index(self, node: str, dest: str, neighbor: str) -> float | None:
        state = self.node_by_label(node).conn
        if state is None:
            return None
        rec = state.peek(self.scenario.id_of(dest), self.scenario.id_of(neighbor))
        return None if rec is None else rec.index

    def route_of(self, node: str, dest: str):
        return self.node_by_label(node).routes.get(self.scenario.id_of(dest))


def run(scenario: Scenario, trace: TextIO | None = None) -> MetricsReport:
    """Build an engine, run the scenario to completion, return the report."""
    return Engine(scenario, trace=trace).run()
