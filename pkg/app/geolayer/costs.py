"""
Decision variables (replica placement, serving assignment), the four cost
components, the objective, constraint checking and the surrogate gain of a
single action.

All sums iterate their keys in sorted order so that two evaluations of the
same state are bit-identical.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .conf import get_setting
from .exceptions import (
    CostModelError,
    EmptyServingSetError,
    InapplicableActionError,
    PlacementInvariantError,
    RoutingConstraintError,
    UnknownItemError,
)
from .wan import GB, MILLION

logger = logging.getLogger(__name__)

LATENCY_TOLERANCE = 1e-12


def _restricted(table, index, only):
    """Sorted keys of ``table``, or only those of the ids in ``only`` via the per-id index."""
    if only is None:
        return sorted(table)
    return sorted((k, y) for k in only for y in index(k))


class PlacementState:
    """Replica map δ: item id -> set of DCs holding a copy."""

    def __init__(self, replicas: Mapping[int, Iterable[str]]):
        self._replicas: Dict[int, FrozenSet[str]] = {}
        for item_id, dcs in replicas.items():
            dcs = frozenset(dcs)
            if not dcs:
                raise PlacementInvariantError(item_id)
            self._replicas[item_id] = dcs

    @classmethod
    def home_only(cls, homes: Mapping[int, str]) -> 'PlacementState':
        return cls({item_id: {dc} for item_id, dc in homes.items()})

    def __eq__(self, other):
        return isinstance(other, PlacementState) and self._replicas == other._replicas

    def __repr__(self):
        return f"<PlacementState items={len(self._replicas)} replicas={self.replica_count()}>"

    def __contains__(self, item_id):
        return item_id in self._replicas

    def items(self) -> List[int]:
        return sorted(self._replicas)

    def holders(self, item_id) -> FrozenSet[str]:
        try:
            return self._replicas[item_id]
        except KeyError:
            raise UnknownItemError(item_id) from None

    def holds(self, item_id, dc) -> bool:
        return dc in self._replicas.get(item_id, ())

    def items_at(self, dc) -> FrozenSet[int]:
        return frozenset(x for x, dcs in self._replicas.items() if dc in dcs)

    def replica_count(self) -> int:
        return sum(len(dcs) for dcs in self._replicas.values())

    def as_dict(self) -> Dict[int, FrozenSet[str]]:
        return dict(self._replicas)

    def key(self) -> Tuple:
        """Lexicographic identity used for deterministic tie-breaks."""
        return tuple((x, tuple(sorted(self._replicas[x]))) for x in sorted(self._replicas))

    def with_replica(self, item_id, dc) -> 'PlacementState':
        replicas = dict(self._replicas)
        replicas[item_id] = replicas.get(item_id, frozenset()) | {dc}
        return PlacementState(replicas)

    def with_replicas(self, item_ids, dc) -> 'PlacementState':
        replicas = dict(self._replicas)
        for item_id in item_ids:
            replicas[item_id] = replicas.get(item_id, frozenset()) | {dc}
        return PlacementState(replicas)

    def without_replica(self, item_id, dc) -> 'PlacementState':
        replicas = dict(self._replicas)
        replicas[item_id] = self.holders(item_id) - {dc}
        return PlacementState(replicas)

    def without_item(self, item_id) -> 'PlacementState':
        self.holders(item_id)
        replicas = dict(self._replicas)
        del replicas[item_id]
        return PlacementState(replicas)


class RoutingState:
    """Serving assignment σ: (item, origin) -> server, and ρ: (pattern, origin) -> servers."""

    def __init__(self, sigma: Mapping[Tuple[int, str], str] = None,
                 rho: Mapping[Tuple[int, str], Iterable[str]] = None):
        self.sigma: Dict[Tuple[int, str], str] = dict(sigma or {})
        self.rho: Dict[Tuple[int, str], FrozenSet[str]] = {
            key: frozenset(dcs) for key, dcs in (rho or {}).items()
        }

    @classmethod
    def from_sigma(cls, sigma, patterns: Mapping[int, 'object'], demand) -> 'RoutingState':
        routing = cls(sigma)
        for (pattern_id, origin), rate in demand.pattern_reads.items():
            if rate > 0 and pattern_id in patterns:
                routing.rho[(pattern_id, origin)] = routing.servers_for(patterns[pattern_id], origin)
        return routing

    def __eq__(self, other):
        return isinstance(other, RoutingState) and self.sigma == other.sigma and self.rho == other.rho

    def __repr__(self):
        return f"<RoutingState sigma={len(self.sigma)} rho={len(self.rho)}>"

    def server(self, item_id, origin) -> Optional[str]:
        return self.sigma.get((item_id, origin))

    def servers_for(self, pattern, origin) -> FrozenSet[str]:
        return frozenset(
            self.sigma[(x, origin)] for x in pattern.items if (x, origin) in self.sigma
        )

    def copy(self) -> 'RoutingState':
        return RoutingState(self.sigma, self.rho)

    def without_item(self, item_id) -> 'RoutingState':
        sigma = {key: d for key, d in self.sigma.items() if key[0] != item_id}
        return RoutingState(sigma, self.rho)


@dataclass
class DemandMatrix:
    """Read/write counts per (item, origin) and pattern reads per (pattern, origin)."""
    reads: Dict[Tuple[int, str], float] = field(default_factory=dict)
    writes: Dict[Tuple[int, str], float] = field(default_factory=dict)
    pattern_reads: Dict[Tuple[int, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ('reads', 'writes', 'pattern_reads'):
            for key, value in getattr(self, name).items():
                if value < 0:
                    raise CostModelError(f"negative {name} count {value} for {key}")

    def __add__(self, other: 'DemandMatrix') -> 'DemandMatrix':
        def merged(a, b):
            out = dict(a)
            for key, value in b.items():
                out[key] = out.get(key, 0) + value
            return out
        return DemandMatrix(
            merged(self.reads, other.reads),
            merged(self.writes, other.writes),
            merged(self.pattern_reads, other.pattern_reads),
        )

    def per_window(self, window_count) -> 'DemandMatrix':
        """Mean rates per window of a matrix counted over ``window_count`` windows."""
        if window_count < 1:
            raise CostModelError(f"window count must be >= 1, got {window_count}")
        if window_count == 1:
            return self
        return DemandMatrix(
            {k: v / window_count for k, v in self.reads.items()},
            {k: v / window_count for k, v in self.writes.items()},
            {k: v / window_count for k, v in self.pattern_reads.items()},
        )

    @cached_property
    def _reads_by_item(self) -> Dict[int, Dict[str, float]]:
        index: Dict[int, Dict[str, float]] = {}
        for (x, y), rate in self.reads.items():
            if rate > 0:
                index.setdefault(x, {})[y] = rate
        return index

    @cached_property
    def _writes_by_item(self) -> Dict[int, Dict[str, float]]:
        index: Dict[int, Dict[str, float]] = {}
        for (x, y), rate in self.writes.items():
            if rate > 0:
                index.setdefault(x, {})[y] = rate
        return index

    @cached_property
    def _pattern_origins(self) -> Dict[int, Dict[str, float]]:
        index: Dict[int, Dict[str, float]] = {}
        for (p, y), rate in self.pattern_reads.items():
            if rate > 0:
                index.setdefault(p, {})[y] = rate
        return index

    def item_reads(self, item_id) -> Dict[str, float]:
        return self._reads_by_item.get(item_id, {})

    def item_writes(self, item_id) -> Dict[str, float]:
        return self._writes_by_item.get(item_id, {})

    def pattern_origins(self, pattern_id) -> Dict[str, float]:
        return self._pattern_origins.get(pattern_id, {})

    def total_reads(self, item_id) -> float:
        return sum(self.item_reads(item_id).values())

    def total_writes(self, item_id) -> float:
        return sum(self.item_writes(item_id).values())

    def is_empty(self) -> bool:
        return not any(self.reads.values()) and not any(self.writes.values())


@dataclass(frozen=True)
class CostParams:
    lambda1: float = 0.5
    lambda2: float = 0.5
    association_scale: float = 1.0
    storage_months: float = 1.0

    @classmethod
    def from_settings(cls):
        return cls(
            lambda1=get_setting('LAMBDA1'),
            lambda2=get_setting('LAMBDA2'),
            association_scale=get_setting('ASSOCIATION_SCALE'),
            storage_months=get_setting('STORAGE_MONTHS_PER_WINDOW'),
        )


@dataclass(frozen=True)
class CostBreakdown:
    storage: float = 0.0
    read: float = 0.0
    write: float = 0.0
    association: float = 0.0

    CSV_HEADER = ('C_S', 'C_R', 'C_W', 'C_A', 'total')

    @property
    def total(self) -> float:
        return self.storage + self.read + self.write + self.association

    def as_row(self) -> List[str]:
        return [repr(v) for v in (self.storage, self.read, self.write, self.association, self.total)]

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.CSV_HEADER, (
            self.storage, self.read, self.write, self.association, self.total,
        )))


@dataclass(frozen=True)
class Violation:
    constraint: str
    witness: str


@dataclass
class FeasibilityReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def of(self, constraint) -> List[Violation]:
        return [v for v in self.violations if v.constraint == constraint]


@dataclass(frozen=True)
class AddReplica:
    item: int
    dc: str


@dataclass(frozen=True)
class RemoveReplica:
    item: int
    dc: str


@dataclass(frozen=True)
class Reroute:
    item: int
    origin: str
    dc: str


class CostModel:
    """Evaluates placement and routing states against a demand snapshot."""

    def __init__(self, items, patterns, wan, params: CostParams = None):
        self.items = items
        self.patterns = patterns
        self.wan = wan
        self.params = params or CostParams()
        self._patterns_by_item: Dict[int, List[int]] = {}
        for pattern_id in sorted(patterns):
            for x in patterns[pattern_id].items:
                self._patterns_by_item.setdefault(x, []).append(pattern_id)

    def size_of(self, item_id) -> int:
        try:
            return self.items[item_id].size_bytes
        except KeyError:
            raise UnknownItemError(item_id) from None

    def patterns_with(self, item_id) -> List[int]:
        return self._patterns_by_item.get(item_id, [])

    # cost components

    def storage_cost(self, placement: PlacementState, only_items=None) -> float:
        months = self.params.storage_months
        keys = placement.items() if only_items is None else sorted(x for x in only_items if x in placement)
        total = 0.0
        for x in keys:
            size = self.size_of(x)
            for d in sorted(placement.holders(x)):
                total += size / GB * self.wan.dc(d).store_price * months
        return total

    def read_unit_cost(self, item_id, origin, server) -> float:
        term = self.wan.dc(server).read_price / MILLION
        if origin != server:
            term += self.size_of(item_id) / GB * self.wan.transfer_price(server, origin)
        return term

    def read_cost(self, routing: RoutingState, demand: DemandMatrix,
                  placement: PlacementState = None, only_items=None) -> float:
        total = 0.0
        for (x, y) in _restricted(demand.reads, demand.item_reads, only_items):
            rate = demand.reads[(x, y)]
            if rate <= 0:
                continue
            d = routing.sigma.get((x, y))
            if d is None:
                raise RoutingConstraintError(x, y)
            if placement is not None and not placement.holds(x, d):
                raise RoutingConstraintError(x, y, d)
            total += rate * self.read_unit_cost(x, y, d)
        return total

    def write_cost(self, placement: PlacementState, demand: DemandMatrix, only_items=None) -> float:
        total = 0.0
        for (x, y) in _restricted(demand.writes, demand.item_writes, only_items):
            rate = demand.writes[(x, y)]
            if rate <= 0:
                continue
            size = self.size_of(x)
            term = self.wan.dc(y).write_price / MILLION
            for d in sorted(placement.holders(x)):
                if d != y:
                    term += self.wan.dc(d).write_price / MILLION + size / GB * self.wan.transfer_price(y, d)
            total += rate * term
        return total

    def serving_payloads(self, pattern, origin, routing: RoutingState) -> Dict[str, int]:
        payloads: Dict[str, int] = {}
        for d in routing.rho.get((pattern.id, origin), ()):
            payloads[d] = 0
        for x in pattern.items:
            d = routing.sigma.get((x, origin))
            if d is not None:
                payloads[d] = payloads.get(d, 0) + self.size_of(x)
        return payloads

    def serving_latencies(self, pattern, origin, routing: RoutingState) -> Dict[str, float]:
        payloads = self.serving_payloads(pattern, origin, routing)
        return {
            d: self.wan.request_latency(origin, d, payloads[d])
            for d in sorted(routing.rho.get((pattern.id, origin), ()))
        }

    def association_penalty(self, routing: RoutingState, demand: DemandMatrix, only_patterns=None) -> float:
        lambda1, lambda2 = self.params.lambda1, self.params.lambda2
        scale = self.params.association_scale
        total = 0.0
        for (p, y) in _restricted(demand.pattern_reads, demand.pattern_origins, only_patterns):
            rate = demand.pattern_reads[(p, y)]
            if rate <= 0:
                continue
            servers = routing.rho.get((p, y))
            if not servers:
                raise EmptyServingSetError(p, y)
            latencies = list(self.serving_latencies(self.patterns[p], y, routing).values())
            lo, hi = min(latencies), max(latencies)
            spread = (hi - lo) / lo if lo > 0 else 0.0
            total += rate * (lambda1 * (len(servers) - 1) + lambda2 * spread) * scale
        return total

    def total_objective(self, placement, routing, demand) -> CostBreakdown:
        return CostBreakdown(
            storage=self.storage_cost(placement),
            read=self.read_cost(routing, demand, placement),
            write=self.write_cost(placement, demand),
            association=self.association_penalty(routing, demand),
        )

    # constraints

    def check_constraints(self, placement, routing, demand, gamma_max) -> FeasibilityReport:
        report = FeasibilityReport()
        known = set(self.wan.dc_ids)

        def violate(constraint, witness):
            report.violations.append(Violation(constraint, witness))

        # (e): every decision references a known DC
        for x in placement.items():
            for d in sorted(placement.holders(x) - known):
                violate('e', f"item {x} replica at unknown DC {d}")
        for key, d in sorted(routing.sigma.items()):
            if d not in known:
                violate('e', f"sigma{key} -> unknown DC {d}")

        # (a)
        for (x, y) in sorted(demand.reads):
            if demand.reads[(x, y)] > 0 and (x, y) not in routing.sigma:
                violate('a', f"item {x} from {y} has no server")
        for (x, y), d in sorted(routing.sigma.items()):
            if not placement.holds(x, d):
                violate('a', f"item {x} from {y} routed to {d} without replica")

        # (b)
        for (p, y) in sorted(demand.pattern_reads):
            if demand.pattern_reads[(p, y)] <= 0:
                continue
            pattern = self.patterns[p]
            servers = routing.rho.get((p, y), frozenset())
            if not servers:
                violate('b', f"pattern {p} from {y} has no serving DC")
                continue
            used = set()
            for x in pattern.items:
                d = routing.sigma.get((x, y))
                if d is None:
                    violate('b', f"pattern {p} from {y}: item {x} unserved")
                elif d not in servers:
                    violate('b', f"pattern {p} from {y}: item {x} served at {d} outside rho")
                else:
                    used.add(d)
            for d in sorted(servers - used):
                violate('b', f"pattern {p} from {y}: rho selects {d} serving nothing")

        # (c)
        if self.items:
            weighted = 0.0
            for (x, y) in sorted(demand.reads):
                rate = demand.reads[(x, y)]
                d = routing.sigma.get((x, y))
                if rate > 0 and d is not None:
                    weighted += rate * self.wan.request_latency(y, d, self.size_of(x))
            average = weighted / len(self.items)
            if average > gamma_max + LATENCY_TOLERANCE:
                violate('c', f"average read latency {average:.6f}s > {gamma_max}s")

        # (d)
        for (p, y) in sorted(demand.pattern_reads):
            if demand.pattern_reads[(p, y)] <= 0 or not routing.rho.get((p, y)):
                continue
            pattern = self.patterns[p]
            latency = max(self.serving_latencies(pattern, y, routing).values())
            requirement = pattern.requirement(gamma_max)
            if latency > requirement + LATENCY_TOLERANCE:
                violate('d', f"pattern {p} from {y}: {latency:.6f}s > {requirement:.6f}s")
        return report

    def pattern_latency_ok(self, pattern_id, origin, routing, gamma_max) -> bool:
        pattern = self.patterns[pattern_id]
        latencies = self.serving_latencies(pattern, origin, routing)
        if not latencies:
            return False
        return max(latencies.values()) <= pattern.requirement(gamma_max) + LATENCY_TOLERANCE

    # single actions

    def cheapest_holder(self, item_id, origin, holders) -> str:
        return min(
            holders,
            key=lambda d: (self.read_unit_cost(item_id, origin, d),
                           self.wan.request_latency(origin, d, self.size_of(item_id)), d),
        )

    def _refresh_rho(self, routing, demand, item_id, origins=None):
        for p in self.patterns_with(item_id):
            for y in demand.pattern_origins(p):
                if origins is None or y in origins:
                    routing.rho[(p, y)] = routing.servers_for(self.patterns[p], y)

    def apply(self, action, placement, routing, demand) -> Tuple[PlacementState, RoutingState]:
        """State after ``action``; routing follows the action as a best response."""
        routing = routing.copy()
        if isinstance(action, AddReplica):
            if placement.holds(action.item, action.dc):
                raise InapplicableActionError(action, 'replica already present')
            placement = placement.with_replica(action.item, action.dc)
            if demand.reads.get((action.item, action.dc), 0) > 0:
                routing.sigma[(action.item, action.dc)] = action.dc
                self._refresh_rho(routing, demand, action.item, {action.dc})
        elif isinstance(action, RemoveReplica):
            holders = placement.holders(action.item)
            if action.dc not in holders:
                raise InapplicableActionError(action, 'no replica to remove')
            if len(holders) == 1:
                raise InapplicableActionError(action, 'last replica')
            placement = placement.without_replica(action.item, action.dc)
            remaining = placement.holders(action.item)
            moved = set()
            for (x, y), d in list(routing.sigma.items()):
                if x == action.item and d == action.dc:
                    routing.sigma[(x, y)] = self.cheapest_holder(x, y, remaining)
                    moved.add(y)
            self._refresh_rho(routing, demand, action.item, moved)
        elif isinstance(action, Reroute):
            if not placement.holds(action.item, action.dc):
                raise InapplicableActionError(action, 'target holds no replica')
            routing.sigma[(action.item, action.origin)] = action.dc
            self._refresh_rho(routing, demand, action.item, {action.origin})
        else:
            raise InapplicableActionError(action, 'unknown action type')
        return placement, routing

    def _partial(self, placement, routing, demand, item_id) -> float:
        only_items = {item_id}
        only_patterns = set(self.patterns_with(item_id))
        return (
            self.storage_cost(placement, only_items)
            + self.read_cost(routing, demand, None, only_items)
            + self.write_cost(placement, demand, only_items)
            + self.association_penalty(routing, demand, only_patterns)
        )

    def marginal_gain(self, action, placement, routing, demand) -> float:
        """
        Objective reduction of applying ``action``: positive means the action
        lowers the cost. Only terms touching the action's item are evaluated.
        """
        after_placement, after_routing = self.apply(action, placement, routing, demand)
        before = self._partial(placement, routing, demand, action.item)
        after = self._partial(after_placement, after_routing, demand, action.item)
        return before - after

