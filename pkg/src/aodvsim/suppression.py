"""Request-flood suppression: who gets a copy of a route request.

The interesting strategy keeps a per-link statistic of how often a request
sent to a given neighbor led to a reply for that destination (the link's
connectivity index) and stops using links whose index sits at or below a
threshold once enough attempts have been observed. The other strategies are
classic flood-limiting baselines used for comparison.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .protocol import NodeId, RreqId


class ConfigError(Exception):
    """Bad strategy configuration."""


class InvariantViolation(Exception):
    """Internal accounting went out of bounds."""


# --- strategy descriptors -------------------------------------------------

@dataclass(frozen=True)
class Flood:
    pass


@dataclass(frozen=True)
class ConnectivityConfig:
    mode: str = "raw"               # raw | ema | blend
    alpha: float = 0.3
    threshold: float = 0.5
    initial_index: float = 1.0
    warmup_attempts: int = 10
    new_link_bonus: float = 0.1
    attempt_timeout: int | None = None   # None: use the discovery deadline

    def validate(self) -> None:
        if self.mode not in ("raw", "ema", "blend"):
            raise ConfigError(f"unknown connectivity mode {self.mode!r}")
        if self.mode in ("ema", "blend") and not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie strictly between 0 and 1, got {self.alpha}")
        if self.warmup_attempts < 0:
            raise ConfigError("warmup_attempts must be non-negative")
        if not (0.0 <= self.initial_index <= 1.0):
            raise ConfigError("initial_index must lie in [0, 1]")


@dataclass(frozen=True)
class Connectivity:
    config: ConnectivityConfig = field(default_factory=ConnectivityConfig)


@dataclass(frozen=True)
class Probabilistic:
    p: float = 0.5


@dataclass(frozen=True)
class CounterBased:
    max_copies: int = 3


@dataclass(frozen=True)
class DistanceBased:
    min_distance: float = 0.0


@dataclass(frozen=True)
class ExpandingRing:
    ttl_start: int = 1
    ttl_increment: int = 2
    ttl_threshold: int = 7


Strategy = Flood | Connectivity | Probabilistic | CounterBased | DistanceBased | ExpandingRing


def strategy_label(strategy: Strategy) -> str:
    """Stable token used in CSV rows and comparison tables."""
    if isinstance(strategy, Flood):
        return "flood"
    if isinstance(strategy, Connectivity):
        return "connectivity"
    if isinstance(strategy, Probabilistic):
        return f"probabilistic-{strategy.p:g}"
    if isinstance(strategy, CounterBased):
        return f"counter-{strategy.max_copies}"
    if isinstance(strategy, DistanceBased):
        return f"distance-{strategy.min_distance:g}"
    return f"ring-{strategy.ttl_start}-{strategy.ttl_increment}-{strategy.ttl_threshold}"


# --- connectivity index ---------------------------------------------------

def raw_ratio(successes: int, attempts: int, initial: float) -> float:
    """Successes over attempts; the configured initial value before any attempt."""
    if attempts < 0 or successes < 0 or successes > attempts:
        raise InvariantViolation(f"bad attempt ledger: {successes}/{attempts}")
    if attempts == 0:
        return initial
    return successes / attempts


def ema_step(previous: float, outcome: float, alpha: float) -> float:
    """Exponentially weighted update toward the latest outcome (1.0 or 0.0)."""
    return alpha * outcome + (1.0 - alpha) * previous


@dataclass
class ConnectivityRecord:
    attempts: int = 0
    successes: int = 0
    index: float = 1.0
    # open attempts for this link: request id -> tick the RREQ went out
    pending: dict[RreqId, int] = field(default_factory=dict)


class ConnectivityState:
    """Per-node table of link statistics, keyed by (destination, neighbor).

    With per_neighbor_aggregate set, statistics pool across destinations and
    the key collapses to the neighbor alone.
    """

    def __init__(self, config: ConnectivityConfig, per_neighbor_aggregate: bool = False):
        config.validate()
        self.config = config
        self.aggregate = per_neighbor_aggregate
        self.records: dict[tuple, ConnectivityRecord] = {}

    def _key(self, dest: NodeId, neighbor: NodeId) -> tuple:
        return (neighbor,) if self.aggregate else (dest, neighbor)

    def record_for(self, dest: NodeId, neighbor: NodeId) -> ConnectivityRecord:
        key = self._key(dest, neighbor)
        rec = self.records.get(key)
        if rec is None:
            rec = ConnectivityRecord(index=self.config.initial_index)
            self.records[key] = rec
        return rec

    def peek(self, dest: NodeId, neighbor: NodeId) -> ConnectivityRecord | None:
        return self.records.get(self._key(dest, neighbor))

    def open_attempt(self, dest: NodeId, neighbor: NodeId, rreq_id: RreqId, now: int) -> None:
        """Attempts count when the request leaves; the index moves at resolution."""
        rec = self.record_for(dest, neighbor)
        if rreq_id in rec.pending:
            raise InvariantViolation(f"attempt {rreq_id} already open toward {neighbor}")
        rec.attempts += 1
        rec.pending[rreq_id] = now

    def resolve_attempt(self, dest: NodeId, neighbor: NodeId, rreq_id: RreqId, success: bool) -> bool:
        """Close one attempt; returns False (no-op) when nothing was pending."""
        rec = self.peek(dest, neighbor)
        if rec is None or rreq_id not in rec.pending:
            return False   # late or unknown reply; ignore
        del rec.pending[rreq_id]
        if success:
            rec.successes += 1
        self._recompute(rec, success)
        return True

    def _recompute(self, rec: ConnectivityRecord, success: bool) -> None:
        cfg = self.config
        ratio = raw_ratio(rec.successes, rec.attempts, cfg.initial_index)
        if cfg.mode == "raw":
            rec.index = ratio
        elif cfg.mode == "ema":
            rec.index = ema_step(rec.index, 1.0 if success else 0.0, cfg.alpha)
        else:  # blend: cumulative ratio pulled toward the previous value
            rec.index = cfg.alpha * ratio + (1.0 - cfg.alpha) * rec.index
        if not (0.0 <= rec.index <= 1.0 + 1e-12):
            raise InvariantViolation(f"index out of range: {rec.index}")

    def fail_pending(self, rreq_id: RreqId) -> None:
        """Resolve every still-open attempt for this request as a failure."""
        for key in sorted(self.records):
            rec = self.records[key]
            if rreq_id in rec.pending:
                del rec.pending[rreq_id]
                self._recompute(rec, success=False)

    def boost_new_link(self, dest: NodeId, neighbor: NodeId) -> float:
        """Nudge a link that just (re)appeared and carried a successful discovery."""
        rec = self.record_for(dest, neighbor)
        rec.index = min(1.0, rec.index + self.config.new_link_bonus)
        return rec.index

    def eligible(self, dest: NodeId, neighbor: NodeId) -> bool:
        """Below the warm-up attempt count every link qualifies; after it the
        index must sit strictly above the threshold."""
        rec = self.peek(dest, neighbor)
        if rec is None or rec.attempts < self.config.warmup_attempts:
            return True
        return rec.index > self.config.threshold

    def snapshot(self, dest: NodeId | None = None) -> dict[tuple, tuple[int, int, float]]:
        """(attempts, successes, index) per key, optionally for one destination."""
        out = {}
        for key, rec in sorted(self.records.items()):
            if dest is not None and not self.aggregate and key[0] != dest:
                continue
            out[key] = (rec.attempts, rec.successes, rec.index)
        return out


# --- forwarding decisions -------------------------------------------------

@dataclass
class SelectionView:
    """What a forwarding decision may look at, assembled by the node."""

    dest: NodeId
    previous_hop: NodeId | None          # None at the originator
    connectivity: ConnectivityState | None = None
    copies_heard: int = 1
    distance_to_previous: float | None = None


def select_targets(
    strategy: Strategy,
    view: SelectionView,
    candidates: list[NodeId],
    rng: random.Random,
) -> list[NodeId]:
    """Subset of candidates the request actually goes to, in candidate order.

    The probabilistic, copy-count and distance baselines act on relays only;
    an originator has nothing "received" to judge, so they pass everything.
    """
    if isinstance(strategy, Connectivity):
        state = view.connectivity
        if state is None:
            raise ConfigError("connectivity strategy requires connectivity state")
        return [n for n in candidates if state.eligible(view.dest, n)]
    if isinstance(strategy, Probabilistic):
        if view.previous_hop is None:
            return list(candidates)
        return list(candidates) if rng.random() < strategy.p else []
    if isinstance(strategy, CounterBased):
        if view.previous_hop is None:
            return list(candidates)
        return list(candidates) if view.copies_heard <= strategy.max_copies else []
    if isinstance(strategy, DistanceBased):
        if view.previous_hop is None:
            return list(candidates)
        if view.distance_to_previous is None:
            raise ConfigError("distance strategy requires node positions")
        return list(candidates) if view.distance_to_previous >= strategy.min_distance else []
    # flood and expanding ring forward to everyone; the ring only caps TTL
    return list(candidates)


def expanding_ring_next_ttl(strategy: ExpandingRing, attempt_index: int, node_count: int) -> int:
    """TTL for the given (0-based) attempt.

    Grows linearly to the threshold; the first attempt at or past the
    threshold uses the threshold itself, anything after that goes network-wide.
    """
    if attempt_index < 0:
        raise ConfigError("attempt_index must be non-negative")
    raw = strategy.ttl_start + attempt_index * strategy.ttl_increment
    if raw < strategy.ttl_threshold:
        return raw
    previous = raw - strategy.ttl_increment
    if attempt_index == 0 or previous < strategy.ttl_threshold:
        return strategy.ttl_threshold
    return node_count
