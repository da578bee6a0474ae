"""
Stepwise layered routing.

Online requests resolve locally first and then widen the search one layer
at a time, taking from each cluster the DC holding the most of what is still
missing. Offline requests are planned top-down (candidate sites per item)
and assembled bottom-up: each site decides to retain or migrate its data,
and migrated data is redistributed to retained sites cluster by cluster.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .conf import get_setting
from .costs import RoutingState
from .exceptions import MissingItemError, RoutingError, UnknownItemError

logger = logging.getLogger(__name__)

MIGRATE = 'migrate'
RETAIN = 'retain'

ITERATION_PRESETS = {
    'pagerank': 15,
    'sssp': 10,
    'hits': 20,
    'lpa': 10,
}


@dataclass(frozen=True)
class RoutePlan:
    origin: str
    pattern_id: int
    served: Dict[str, Tuple[int, ...]]
    latency: float
    wan_bytes: int
    layers_visited: int = 0

    @property
    def servers(self) -> FrozenSet[str]:
        return frozenset(self.served)

    def assignment(self) -> Dict[int, str]:
        return {x: d for d, items in self.served.items() for x in items}

    def rows(self, request_id, graph) -> List[Tuple]:
        """``request_id,item_id,server_dc,bytes`` per served item."""
        return [
            (request_id, x, d, graph.item(x).size_bytes)
            for d in sorted(self.served) for x in self.served[d]
        ]


def holders_of(placement, item_id) -> FrozenSet[str]:
    """Replica holders of an item; a missing or unheld item raises ``MissingItemError``."""
    try:
        holders = placement.holders(item_id)
    except UnknownItemError:
        raise MissingItemError(item_id) from None
    if not holders:
        raise MissingItemError(item_id)
    return holders


def build_plan(origin, pattern_id, assignment: Mapping[int, str], layered, layers_visited=0) -> RoutePlan:
    """Materialize a plan (latency, WAN bytes) from an item -> server map."""
    served: Dict[str, List[int]] = {}
    payloads: Dict[str, int] = {}
    for x in sorted(assignment):
        d = assignment[x]
        served.setdefault(d, []).append(x)
        payloads[d] = payloads.get(d, 0) + layered.graph.item(x).size_bytes
    latency = layered.wan.pattern_latency(origin, payloads) if payloads else 0.0
    wan_bytes = sum(b for d, b in payloads.items() if d != origin)
    return RoutePlan(
        origin, pattern_id,
        {d: tuple(items) for d, items in sorted(served.items())},
        latency, wan_bytes, layers_visited,
    )


def _greedy_cover(remaining: set, scope, placement, origin, wan, assignment):
    while remaining:
        counts = {}
        for d in scope:
            held = sum(1 for x in remaining if placement.holds(x, d))
            if held:
                counts[d] = held
        if not counts:
            return
        best = min(counts, key=lambda d: (-counts[d], wan.link(d, origin).rtt_s, d))
        for x in sorted(remaining):
            if placement.holds(x, best):
                assignment[x] = best
        remaining.difference_update(x for x in list(remaining) if assignment.get(x) == best)


def route_online(pattern, origin, placement, layered) -> RoutePlan:
    """Serve ``pattern`` for ``origin`` by bottom-up expanding retrieval."""
    for x in pattern.items:
        holders_of(placement, x)

    assignment: Dict[int, str] = {}
    remaining = set()
    for x in pattern.items:
        if placement.holds(x, origin):
            assignment[x] = origin
        else:
            remaining.add(x)

    visited = 0
    for bs_id in layered.ancestors(origin):
        if not remaining:
            break
        visited += 1
        scope = sorted(layered.dcs_under(bs_id) - {origin})
        _greedy_cover(remaining, scope, placement, origin, layered.wan, assignment)

    if remaining:
        # items only reachable outside the origin's hierarchy tree
        visited += 1
        scope = sorted(set(layered.wan.dc_ids) - {origin})
        _greedy_cover(remaining, scope, placement, origin, layered.wan, assignment)
    if remaining:
        raise MissingItemError(min(remaining))

    plan = build_plan(origin, pattern.id, assignment, layered, visited)
    logger.debug("Pattern %s from %s served by %s in %.4fs",
                 pattern.id, origin, ','.join(plan.served), plan.latency)
    return plan


def routing_state_from_plans(plans: Mapping[Tuple[int, str], RoutePlan], patterns,
                             demand, gamma_max) -> RoutingState:
    """
    Aggregate per-request plans into σ and ρ. σ(x, y) comes from the plan of
    the tightest-requirement pattern read from y that contains x.
    """
    chosen: Dict[Tuple[int, str], Tuple[float, int, str]] = {}
    for (p, y) in sorted(plans):
        requirement = patterns[p].requirement(gamma_max)
        for x, d in plans[(p, y)].assignment().items():
            rank = (requirement, p, d)
            if (x, y) not in chosen or rank < chosen[(x, y)]:
                chosen[(x, y)] = rank
    sigma = {key: rank[2] for key, rank in chosen.items()}
    return RoutingState.from_sigma(sigma, patterns, demand)


@dataclass(frozen=True)
class MigrationParams:
    iota: int = 15
    msg_bytes: int = 1000
    xi: Optional[float] = None
    xi_fraction: float = 0.2
    eta: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.iota < 1:
            raise RoutingError(f"iota must be >= 1, got {self.iota}")
        if self.msg_bytes <= 0:
            raise RoutingError(f"msg_bytes must be positive, got {self.msg_bytes}")
        for layer, eta in self.eta.items():
            if not 0 < eta <= 1:
                raise RoutingError(f"eta for layer {layer} must lie in (0, 1], got {eta}")

    @classmethod
    def from_settings(cls, layered=None, job=None, **overrides) -> 'MigrationParams':
        values = {
            'iota': ITERATION_PRESETS[job] if job else get_setting('IOTA'),
            'msg_bytes': get_setting('MSG_BYTES'),
            'xi_fraction': get_setting('XI_FRACTION'),
        }
        if layered is not None:
            values['eta'] = {k: layered.eta(k) for k in range(1, layered.h + 1)}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def eta_of(self, layer) -> float:
        return self.eta.get(layer, 1.0)


def migration_test(local_bytes, replica_vertices, boundary_vertices, params: MigrationParams,
                   layer=None, xi=None) -> str:
    """Migrate iff ι·s_msg·(|I_rep| + |BS|) − Σ s_x > (1 − η_L)·ξ."""
    xi = params.xi if xi is None else xi
    lhs = params.iota * params.msg_bytes * (replica_vertices + boundary_vertices) - local_bytes
    rhs = (1 - params.eta_of(layer)) * (xi or 0.0)
    return MIGRATE if lhs > rhs else RETAIN


@dataclass
class AssemblyPlan:
    retained: Tuple[str, ...]
    locations: Dict[int, str]
    migrations: List[Tuple[int, str, str]]
    migrated_bytes: int
    requested_bytes: int
    replica_vertices: int
    boundary_vertices: int
    strategy: str = 'assembled'

    @property
    def migration_ratio(self) -> float:
        return self.migrated_bytes / self.requested_bytes if self.requested_bytes else 0.0


def estimate_offline_comm(plan: AssemblyPlan, params: MigrationParams, iterations=None) -> float:
    """Migration bytes plus per-iteration boundary and replica-sync messages."""
    iterations = params.iota if iterations is None else iterations
    return plan.migrated_bytes + iterations * params.msg_bytes * (
        plan.replica_vertices + plan.boundary_vertices
    )


def _boundary_vertices(locations: Mapping[int, str], graph) -> Dict[str, int]:
    """Requested vertices, per site, with a requested neighbor placed at another site."""
    counts: Dict[str, int] = {}
    for v, site in locations.items():
        if not graph.item(v).is_vertex:
            continue
        for w, _ in graph.neighbors(v):
            if w in locations and locations[w] != site:
                counts[site] = counts.get(site, 0) + 1
                break
    return counts


def _replica_vertices(locations: Mapping[int, str], placement, retained, graph) -> Dict[str, int]:
    """Requested vertices, per site, whose replicas also sit at another retained site."""
    counts: Dict[str, int] = {}
    for v, site in locations.items():
        if not graph.item(v).is_vertex:
            continue
        if any(d != site for d in placement.holders(v) if d in retained):
            counts[site] = counts.get(site, 0) + 1
    return counts


def _finish(locations, migrations, placement, graph, strategy) -> AssemblyPlan:
    retained = tuple(sorted(set(locations.values())))
    migrated = sum(graph.item(x).size_bytes for x, _, _ in migrations)
    requested = sum(graph.item(x).size_bytes for x in locations)
    return AssemblyPlan(
        retained=retained,
        locations=dict(sorted(locations.items())),
        migrations=sorted(migrations),
        migrated_bytes=migrated,
        requested_bytes=requested,
        replica_vertices=sum(_replica_vertices(locations, placement, set(retained), graph).values()),
        boundary_vertices=sum(_boundary_vertices(locations, graph).values()),
        strategy=strategy,
    )


def gather_plan(items, placement, layered, site) -> AssemblyPlan:
    """Everything assembled at a single ``site``."""
    locations, migrations = {}, []
    for x in sorted(set(items)):
        holders = holders_of(placement, x)
        if site not in holders:
            migrations.append((x, min(holders), site))
        locations[x] = site
    return _finish(locations, migrations, placement, layered.graph, 'gather')


def localize(items, placement, layered) -> Dict[int, FrozenSet[str]]:
    """
    Top-down localization: starting from the roots of the hierarchy, every
    item follows each child cluster holding it down to Layer_0. Every holder
    stays a candidate; duplicates are left to the assembly phase.
    """
    pending = {x: holders_of(placement, x) for x in items}
    candidates: Dict[int, set] = {x: set() for x in pending}
    frontier = sorted({layered.root_of(d) for held in pending.values() for d in held})
    while frontier:
        node = frontier.pop(0)
        if layered.is_dc(node):
            for x, held in pending.items():
                if node in held:
                    candidates[x].add(node)
            continue
        for child in layered.children(node):
            reached = layered.dcs_under(child)
            if any(held & reached for held in pending.values()):
                frontier.append(child)
    return {x: frozenset(sorted(sites)) for x, sites in candidates.items()}


def _candidate_counts(candidates: Mapping[int, FrozenSet[str]], graph) -> Tuple[Dict[str, int], Dict[str, int]]:
    """Per site: candidate vertices with a requested neighbor elsewhere, and candidate vertices held elsewhere too."""
    boundary: Dict[str, int] = {}
    replicas: Dict[str, int] = {}
    for v, sites in candidates.items():
        if not graph.item(v).is_vertex:
            continue
        neighbors = [candidates[w] for w, _ in graph.neighbors(v) if w in candidates]
        for d in sites:
            if any(d not in other for other in neighbors):
                boundary[d] = boundary.get(d, 0) + 1
            if len(sites) > 1:
                replicas[d] = replicas.get(d, 0) + 1
    return boundary, replicas


def route_offline(items: Iterable[int], placement, layered, params: MigrationParams) -> AssemblyPlan:
    """
    Localize top-down, then assemble bottom-up: every candidate site runs
    the migration test, duplicates settle at the retained holder with the
    most local data, and data of migrating sites is redistributed cluster by
    cluster. The single-site gather plan is kept instead when it is cheaper.
    """
    items = sorted(set(items))
    graph, wan = layered.graph, layered.wan
    candidates = localize(items, placement, layered)

    sites = sorted({d for held in candidates.values() for d in held})
    local_bytes = {d: 0 for d in sites}
    for x, held in candidates.items():
        for d in held:
            local_bytes[d] += graph.item(x).size_bytes
    boundary, replicas = _candidate_counts(candidates, graph)

    xi = params.xi
    if xi is None:
        xi = params.xi_fraction * params.iota * params.msg_bytes * sum(boundary.values())

    decisions = {}
    for d in sites:
        parent = layered.parent.get(d)
        layer = layered.layer_of(parent) if parent else layered.top_layer()
        decisions[d] = migration_test(
            local_bytes[d], replicas.get(d, 0), boundary.get(d, 0), params, layer, xi,
        )
    retained = {d for d in sites if decisions[d] == RETAIN}
    if not retained:
        retained = {min(sites, key=lambda d: (-local_bytes[d], d))}
    logger.debug("Offline request over %d items: sites %s, retained %s",
                 len(items), sites, sorted(retained))

    def by_share(choices):
        return min(choices, key=lambda d: (-local_bytes[d], d))

    locations: Dict[int, str] = {}
    pending: Dict[str, List[int]] = {}
    for x in items:
        kept = candidates[x] & retained
        if kept:
            locations[x] = by_share(kept)
        else:
            pending.setdefault(by_share(candidates[x]), []).append(x)
    load = {d: 0 for d in retained}
    for x, d in locations.items():
        load[d] += graph.item(x).size_bytes
    migrations: List[Tuple[int, str, str]] = []

    def settle(x, source, destination):
        locations[x] = destination
        load[destination] += graph.item(x).size_bytes
        if not placement.holds(x, destination):
            migrations.append((x, source, destination))

    def cheapest(source, batch, choices):
        size = sum(graph.item(x).size_bytes for x in batch)
        return min(
            sorted(choices),
            key=lambda d: (size * wan.transfer_price(source, d), load[d], d),
        )

    nodes = sorted(layered.bridge_subgraphs.values(), key=lambda b: (b.layer, b.id))
    for bs in nodes:
        sources = [s for s in sorted(pending) if s in bs.dcs]
        if not sources:
            continue
        direct = sorted(d for d in bs.merged if d in retained)
        below = sorted(d for d in bs.dcs if d in retained)
        for source in sources:
            batch = pending.pop(source)
            if direct:
                for x in batch:
                    settle(x, source, direct[x % len(direct)])
            elif below:
                destination = cheapest(source, batch, below)
                for x in batch:
                    settle(x, source, destination)
            else:
                pending[source] = batch
    for source in sorted(pending):
        batch = pending[source]
        destination = cheapest(source, batch, retained)
        for x in batch:
            settle(x, source, destination)

    assembled = _finish(locations, migrations, placement, graph, 'assembled')
    best_site = min(
        (gather_plan(items, placement, layered, d) for d in wan.dc_ids),
        key=lambda plan: (estimate_offline_comm(plan, params), plan.retained),
    )
    assembled_comm = estimate_offline_comm(assembled, params)
    gather_comm = estimate_offline_comm(best_site, params)
    if gather_comm < assembled_comm:
        logger.info("Offline request over %d items gathered at %s (%.0f < %.0f assembled bytes)",
                    len(items), best_site.retained[0], gather_comm, assembled_comm)
        return best_site
    logger.info("Offline request over %d items assembled at %s (%.0f <= %.0f gather bytes)",
                len(items), ','.join(assembled.retained), assembled_comm, gather_comm)
    return assembled
