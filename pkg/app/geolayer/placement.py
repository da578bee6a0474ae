"""
Overlap-centric replica placement over the layered graph.

Patterns sink to the layer whose latency interval contains their
requirement. The hierarchy is then walked top-down: at every bridge subgraph
a pattern is either fully replicated into the requesting members of its
cluster (when the replication gain is non-negative) or decomposed with the
other patterns at that node into disjoint overlap regions, which are
replicated or handed to the member that wins a heat-diffusion competition.
Work reaching a DC is stored there. A best-response refinement pass and
heat-based pre-caching finish the run.

Online maintenance (heat-driven eviction, inserts and deletes) works on the
resulting state.
"""
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

from .conf import get_setting
from .costs import LATENCY_TOLERANCE, PlacementState, RemoveReplica, Reroute
from .dhd import (
    DhdParams,
    HeatGraph,
    HeatState,
    SourceState,
    extract_hot_subgraph,
    item_heat,
    quantile_threshold,
    run_to_steady,
    source_step,
    vertex_step,
)
from .exceptions import NoCandidateError, PlacementError
from .layers import layer_of_latency
from .routing import route_online, routing_state_from_plans
from .wan import GB, MILLION

logger = logging.getLogger(__name__)

REPLICATE = 'replicate'
SINK = 'sink'
COMPETE = 'compete'
STORE = 'store'
REFINE = 'refine'
PRECACHE = 'precache'
MONOTONE_DECISIONS = (REPLICATE, REFINE)

ZERO_REACH = 1e-12


@dataclass(frozen=True)
class PlacementParams:
    dhd: DhdParams = field(default_factory=DhdParams)
    theta_quantile: float = 0.55
    precache: bool = True
    refine: bool = True
    competition_sweeps: int = 50
    propagation_tol: float = 1e-6
    radius: int = 2

    @classmethod
    def from_settings(cls, **overrides) -> 'PlacementParams':
        values = {
            'dhd': DhdParams.from_settings(),
            'theta_quantile': get_setting('THETA_QUANTILE'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class Region:
    id: str
    items: FrozenSet[int]
    patterns: Tuple[int, ...]
    read_rate: float = 0.0


@dataclass(frozen=True)
class PlacementEntry:
    seq: int
    layer: int
    cluster: str
    target: str
    kind: str
    object_id: str
    gain: float
    decision: str
    items: Tuple[int, ...] = ()

    CSV_HEADER = ('seq', 'layer', 'cluster', 'target', 'kind', 'object_id', 'gain', 'decision', 'items')

    def as_row(self) -> List[str]:
        return [
            str(self.seq), str(self.layer), self.cluster, self.target, self.kind,
            self.object_id, repr(self.gain), self.decision, ' '.join(map(str, self.items)),
        ]


class PlacementLog:
    """Ordered record of committed placement decisions."""

    def __init__(self):
        self.entries: List[PlacementEntry] = []

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def record(self, layer, cluster, target, kind, object_id, gain, decision, items=()) -> PlacementEntry:
        entry = PlacementEntry(
            len(self.entries) + 1, layer, cluster, target, kind, str(object_id),
            float(gain), decision, tuple(sorted(items)),
        )
        self.entries.append(entry)
        logger.debug("%s %s %s at %s -> %s (gain %.6g)",
                     decision, kind, object_id, cluster, target, gain)
        return entry

    def of(self, *decisions) -> List[PlacementEntry]:
        return [e for e in self.entries if e.decision in decisions]

    def rows(self) -> List[List[str]]:
        return [e.as_row() for e in self.entries]

    def replay(self, homes: Mapping[int, str]) -> PlacementState:
        """Rebuild the placement from home copies plus every replica-changing entry."""
        placement = PlacementState.home_only(homes)
        for entry in self.entries:
            if entry.decision in (STORE, PRECACHE):
                placement = placement.with_replicas(entry.items, entry.target)
            elif entry.decision == REFINE and entry.kind == 'replica':
                for x in entry.items:
                    placement = placement.without_replica(x, entry.target)
        return placement


@dataclass
class PatternDistribution:
    queues: Dict[int, List[int]] = field(default_factory=dict)
    held: Dict[str, Set[str]] = field(default_factory=dict)
    anchors: Dict[Tuple[int, str], str] = field(default_factory=dict)

    def layer_of(self, pattern_id) -> Optional[int]:
        for layer, queue in self.queues.items():
            if pattern_id in queue:
                return layer
        return None


@dataclass
class PlacementResult:
    placement: PlacementState
    routing: object
    log: PlacementLog
    distribution: PatternDistribution


def filter_patterns(patterns, demand) -> Dict[int, object]:
    """Patterns read more often than their items are written."""
    kept = {}
    for p in sorted(patterns):
        reads = sum(demand.pattern_origins(p).values())
        writes = sum(demand.total_writes(x) for x in patterns[p].items)
        if reads > writes:
            kept[p] = patterns[p]
    return kept


def latency_safe_anchor(layered, origin, max_layer, requirement, payload_bytes) -> str:
    """Highest node on ``origin``'s chain, up to ``max_layer``, whose DCs all meet the requirement."""
    node = origin
    for bs_id in layered.ancestors(origin):
        if layered.layer_of(bs_id) > max_layer:
            break
        too_slow = any(
            layered.wan.request_latency(origin, d, payload_bytes) > requirement + LATENCY_TOLERANCE
            for d in sorted(layered.dcs_under(bs_id))
        )
        if too_slow:
            break
        node = bs_id
    return node


def sink_patterns(patterns, layered, gamma_max, demand) -> PatternDistribution:
    distribution = PatternDistribution()
    for p in sorted(patterns):
        pattern = patterns[p]
        requirement = pattern.requirement(gamma_max)
        layer = layer_of_latency(requirement, layered.thresholds)
        distribution.queues.setdefault(layer, []).append(p)
        payload = pattern.size_bytes(layered.graph)
        for y in sorted(demand.pattern_origins(p)):
            distribution.anchors[(p, y)] = latency_safe_anchor(
                layered, y, layer - 1, requirement, payload,
            )
    return distribution


def decompose_overlaps(patterns: Mapping[int, Iterable[int]], demand=None, prefix='r') -> List[Region]:
    """Group items by the exact set of patterns containing them."""
    signatures: Dict[int, List[int]] = {}
    for p in sorted(patterns):
        for x in patterns[p]:
            signatures.setdefault(x, [])
            if p not in signatures[x]:
                signatures[x].append(p)
    cells: Dict[Tuple[int, ...], Set[int]] = {}
    for x, members in signatures.items():
        cells.setdefault(tuple(members), set()).add(x)
    regions = []
    for members, items in sorted(cells.items(), key=lambda kv: min(kv[1])):
        rate = sum(demand.total_reads(x) for x in items) if demand is not None else 0.0
        regions.append(Region(f"{prefix}{min(items)}", frozenset(items), members, rate))
    return regions


def _ball(graph, seeds, radius) -> Set[int]:
    seen = set(seeds)
    frontier = deque((v, 0) for v in sorted(seeds))
    while frontier:
        v, depth = frontier.popleft()
        if depth == radius:
            continue
        for w, _ in graph.neighbors(v):
            if w not in seen:
                seen.add(w)
                frontier.append((w, depth + 1))
    return seen


def diffused_heat(graph, held_vertices, target_vertices, initial: Mapping[int, float],
                  params: PlacementParams) -> float:
    """
    Heat reaching ``target_vertices`` from the held vertices once propagation
    stalls, on the subgraph within ``params.radius`` hops of the targets.
    """
    system = _ball(graph, target_vertices, params.radius)
    sources = set(held_vertices) & system
    if not sources:
        return 0.0
    heat_graph = HeatGraph.from_graph(graph, system)
    state = HeatState.from_values(heat_graph, {v: max(1.0, initial.get(v, 0.0)) for v in sources})
    keep = 1 - params.dhd.gamma
    for _ in range(params.competition_sweeps):
        following = vertex_step(state, heat_graph, params.dhd)
        moved = float(np.abs(following.heat / keep - state.heat).sum()) / 2
        state = following
        if moved < params.propagation_tol:
            break
    return float(sum(state.heat[heat_graph.index[v]] for v in target_vertices if v in heat_graph.index))


def regional_competition(region: Region, candidates, graph, held: Mapping[str, Iterable[int]],
                         access: Mapping[str, float], initial: Mapping[int, float] = None,
                         params: PlacementParams = None) -> str:
    """
    Winner among ``candidates`` for ``region``: the one whose held items
    diffuse the most heat into it, or the one reading it most when no held
    data reaches it. Ties go to the lower id.
    """
    candidates = sorted(candidates)
    if not candidates:
        raise NoCandidateError(region.id)
    if len(candidates) == 1:
        return candidates[0]
    params = params or PlacementParams()
    initial = initial or {}
    targets = graph.vertices_of(region.items)
    scores = {
        c: diffused_heat(graph, graph.vertices_of(held.get(c, ())), targets, initial, params)
        for c in candidates
    }
    best = max(scores.values())
    if best > ZERO_REACH:
        return next(c for c in candidates if scores[c] == best)
    frequency = {c: access.get(c, 0.0) for c in candidates}
    top = max(frequency.values())
    return next(c for c in candidates if frequency[c] == top)


def dc_steady_heat(graph, partitioning, dc, demand, params: PlacementParams) -> HeatState:
    """
    Steady heat on the DC's own subgraph plus the external topology near its
    boundary. Every vertex the DC reads is a source injecting Q^0 plus
    delta_q per read.
    """
    visible = set(partitioning.vertex_sets[dc]) | _ball(graph, partitioning.boundary[dc], params.radius)
    heat_graph = HeatGraph.from_graph(graph, visible)
    reads = {v: demand.reads.get((v, dc), 0.0) for v in heat_graph.nodes}
    sources = [v for v in heat_graph.nodes if reads[v] > 0]
    if not sources:
        return HeatState.zeros(heat_graph)
    state = HeatState.from_values(heat_graph, reads)
    source_state = source_step(SourceState.initialize(heat_graph, sources), 0, reads)
    steady, _, _ = run_to_steady(state, source_state, heat_graph, params.dhd)
    return steady


def precache_hot(steady: HeatState, graph, theta_quantile, local_items) -> FrozenSet[int]:
    """
    Items of the hot subgraph the DC lacks, with theta at the
    ``theta_quantile`` of the positive vertex heats.
    """
    if theta_quantile >= 1:
        return frozenset()
    theta = quantile_threshold([h for h in steady.heat if h > 0], theta_quantile)
    hot = extract_hot_subgraph(steady, graph, theta)
    return frozenset(hot.items() - set(local_items))


def hit_rate(cached, accessed) -> float:
    """Fraction of cached items that are accessed."""
    cached = set(cached)
    if not cached:
        return 0.0
    return len(cached & set(accessed)) / len(cached)


@dataclass(frozen=True)
class _Unit:
    kind: str
    object_id: str
    items: FrozenSet[int]
    patterns: Tuple[int, ...]
    origins: FrozenSet[str]


class OverlapPlacer:
    """One placement run over a fixed layered graph and demand snapshot."""

    def __init__(self, layered, patterns, demand, cost_model, gamma_max, params: PlacementParams = None):
        self.layered = layered
        self.graph = layered.graph
        self.partitioning = layered.partitioning
        self.patterns = patterns
        self.demand = demand
        self.cost_model = cost_model
        self.gamma_max = gamma_max
        self.params = params or PlacementParams()
        self.homes = self.partitioning.homes()
        self.placement = PlacementState.home_only(self.homes)
        self.log = PlacementLog()
        self.distribution = PatternDistribution()
        self.work: Dict[str, List[_Unit]] = {}
        self.held_items: Dict[str, Set[int]] = {}
        self.vertex_reads = {
            v: demand.total_reads(v) for v in self.graph.vertex_ids
        }

    # replication gain

    def _target_dc(self, node, items, origins) -> str:
        dcs = sorted(self.layered.dcs_under(node))
        readers = [d for d in dcs if d in origins]
        if not readers:
            return dcs[0]
        reads = {
            d: sum(self.demand.item_reads(x).get(d, 0.0) for x in items) for d in readers
        }
        return min(readers, key=lambda d: (-reads[d], d))

    def replication_gain(self, items, origins, targets) -> float:
        """
        Surrogate saving of giving each target node a full copy of ``items``:
        remote reads and multi-DC serving avoided, minus added storage and
        synchronization.
        """
        cm, placement = self.cost_model, self.placement
        months = cm.params.storage_months
        target_dc = {node: self._target_dc(node, items, origins) for node in targets}
        reader_target = {}
        for node, d in target_dc.items():
            for y in self.layered.dcs_under(node):
                reader_target[y] = d
        added = {x: {d for d in target_dc.values() if not placement.holds(x, d)} for x in items}

        gain = 0.0
        after_holders = {}
        for x in sorted(items):
            size = cm.size_of(x)
            holders = placement.holders(x)
            after_holders[x] = holders | added[x]
            for y, rate in sorted(self.demand.item_reads(x).items()):
                if y not in origins or y not in reader_target:
                    continue
                before = cm.read_unit_cost(x, y, cm.cheapest_holder(x, y, holders))
                after = cm.read_unit_cost(x, y, cm.cheapest_holder(x, y, after_holders[x]))
                gain += rate * (before - after)
            for d in sorted(added[x]):
                gain -= size / GB * cm.wan.dc(d).store_price * months
            for w, rate in sorted(self.demand.item_writes(x).items()):
                for d in sorted(added[x]):
                    if d != w:
                        gain -= rate * (cm.wan.dc(d).write_price / MILLION
                                        + size / GB * cm.wan.transfer_price(w, d))

        lambda1, scale = cm.params.lambda1, cm.params.association_scale
        touched = sorted({p for x in items for p in cm.patterns_with(x)})
        for p in touched:
            pattern = self.patterns[p]
            for y, rate in sorted(self.demand.pattern_origins(p).items()):
                if y not in origins:
                    continue
                before = {cm.cheapest_holder(x, y, placement.holders(x)) for x in pattern.items}
                after = {
                    cm.cheapest_holder(x, y, after_holders.get(x, placement.holders(x)))
                    for x in pattern.items
                }
                gain += rate * lambda1 * (len(before) - len(after)) * scale
        return gain

    # top-down pass

    def _enqueue(self, node, unit):
        self.work.setdefault(node, []).append(unit)

    def _requesting(self, node, origins) -> List[str]:
        return [c for c in self.layered.children(node) if self.layered.dcs_under(c) & origins]

    def _must_sink(self, unit, node) -> bool:
        p = unit.patterns[0]
        layer = self.layered.layer_of(node)
        return any(
            self.layered.layer_of(self.distribution.anchors[(p, y)]) < layer
            for y in sorted(unit.origins)
        )

    def _hand_down(self, node, unit, targets, gain, decision):
        layer = self.layered.layer_of(node)
        for child in targets:
            self.log.record(layer, node, child, unit.kind, unit.object_id, gain, decision, unit.items)
            self._enqueue(child, replace(unit, origins=unit.origins & self.layered.dcs_under(child)))

    def _held_by(self, node) -> Set[int]:
        held = set(self.held_items.get(node, ()))
        for dc in self.layered.dcs_under(node):
            held.update(self.partitioning.vertex_sets[dc])
        return held

    def _compete(self, node, unit):
        children = self.layered.children(node)
        region = Region(unit.object_id, unit.items, unit.patterns)
        targets = self.graph.vertices_of(unit.items)
        ball = _ball(self.graph, targets, self.params.radius)
        held = {c: self._held_by(c) & ball for c in children}
        access = {
            c: sum(self.demand.item_reads(x).get(d, 0.0)
                   for x in unit.items for d in self.layered.dcs_under(c))
            for c in children
        }
        winner = regional_competition(
            region, children, self.graph, held, access, self.vertex_reads, self.params,
        )
        gain = self.replication_gain(unit.items, unit.origins, [winner])
        self._hand_down(node, unit, [winner], gain, COMPETE)

    def _store(self, dc, unit):
        gain = self.replication_gain(unit.items, unit.origins, [dc])
        self.placement = self.placement.with_replicas(unit.items, dc)
        self.log.record(0, dc, dc, unit.kind, unit.object_id, gain, STORE, unit.items)
        for node in [dc] + self.layered.ancestors(dc):
            self.held_items.setdefault(node, set()).update(unit.items)
            self.distribution.held.setdefault(node, set()).add(unit.object_id)

    def _process(self, node, units):
        if self.layered.is_dc(node):
            for unit in units:
                self._store(node, unit)
            return

        pool_patterns, pool_regions = [], []
        for unit in units:
            requesting = self._requesting(node, unit.origins)
            if unit.kind == 'pattern' and self._must_sink(unit, node):
                gain = self.replication_gain(unit.items, unit.origins, requesting)
                self._hand_down(node, unit, requesting, gain, SINK)
                continue
            if requesting:
                gain = self.replication_gain(unit.items, unit.origins, requesting)
                if gain >= 0:
                    self._hand_down(node, unit, requesting, gain, REPLICATE)
                    continue
            if unit.kind == 'pattern':
                pool_patterns.append(unit)
            else:
                pool_regions.append(unit)

        if pool_patterns:
            regions = decompose_overlaps(
                {u.patterns[0]: u.items for u in pool_patterns}, self.demand, prefix=f"{node}/r",
            )
            origins_of = {u.patterns[0]: u.origins for u in pool_patterns}
            for region in regions:
                origins = frozenset().union(*(origins_of[p] for p in region.patterns))
                unit = _Unit('region', region.id, region.items, region.patterns, origins)
                requesting = self._requesting(node, origins)
                if requesting:
                    gain = self.replication_gain(unit.items, origins, requesting)
                    if gain >= 0:
                        self._hand_down(node, unit, requesting, gain, REPLICATE)
                        continue
                self._compete(node, unit)
        for unit in pool_regions:
            self._compete(node, unit)

    # refinement

    def _plans(self, placement, keys):
        return {
            (p, y): route_online(self.patterns[p], y, placement, self.layered)
            for (p, y) in keys
        }

    def _online_ok(self, placement, keys) -> bool:
        for (p, y), plan in self._plans(placement, keys).items():
            if plan.latency > self.patterns[p].requirement(self.gamma_max) + LATENCY_TOLERANCE:
                return False
        return True

    def _weighted_latency(self, routing, x) -> float:
        total = 0.0
        size = self.cost_model.size_of(x)
        for y, rate in sorted(self.demand.item_reads(x).items()):
            server = routing.sigma.get((x, y))
            if server is not None:
                total += rate * self.layered.wan.request_latency(y, server, size)
        return total

    def _refine(self, routing):
        """Accept replica removals and reroutes with positive gain that keep every latency bound."""
        cm, demand = self.cost_model, self.demand
        budget = self.gamma_max * len(cm.items)
        weighted = sum(self._weighted_latency(routing, x) for x in sorted({x for x, _ in demand.reads}))

        def keeps_latency(x, placement, after):
            delta = self._weighted_latency(after, x) - self._weighted_latency(routing, x)
            if delta > 0 and weighted + delta > budget + LATENCY_TOLERANCE:
                return False, delta
            keys = [(p, y) for p in cm.patterns_with(x) for y in sorted(demand.pattern_origins(p))]
            for p, y in keys:
                if not cm.pattern_latency_ok(p, y, after, self.gamma_max):
                    return False, delta
            return self._online_ok(placement, keys), delta

        for x in self.placement.items():
            for d in sorted(self.placement.holders(x)):
                if d == self.homes.get(x) or len(self.placement.holders(x)) == 1:
                    continue
                action = RemoveReplica(x, d)
                gain = cm.marginal_gain(action, self.placement, routing, demand)
                if gain <= 0:
                    continue
                placement, after = cm.apply(action, self.placement, routing, demand)
                ok, delta = keeps_latency(x, placement, after)
                if not ok:
                    continue
                self.placement, routing, weighted = placement, after, weighted + delta
                self.log.record(0, d, d, 'replica', x, gain, REFINE, (x,))

        for (x, y) in sorted(demand.reads):
            if demand.reads[(x, y)] <= 0:
                continue
            for d in sorted(self.placement.holders(x)):
                if d == routing.sigma.get((x, y)):
                    continue
                action = Reroute(x, y, d)
                gain = cm.marginal_gain(action, self.placement, routing, demand)
                if gain <= 0:
                    continue
                _, after = cm.apply(action, self.placement, routing, demand)
                ok, delta = keeps_latency(x, self.placement, after)
                if not ok:
                    continue
                routing, weighted = after, weighted + delta
                self.log.record(0, y, d, 'route', x, gain, REFINE, (x,))
        return routing

    # pre-caching

    def _precache(self):
        theta = self.params.theta_quantile
        for dc in self.partitioning.dcs:
            steady = dc_steady_heat(self.graph, self.partitioning, dc, self.demand, self.params)
            cached = precache_hot(steady, self.graph, theta, self.placement.items_at(dc))
            if not cached:
                continue
            gain = self.replication_gain(cached, frozenset([dc]), [dc])
            self.placement = self.placement.with_replicas(cached, dc)
            self.log.record(0, dc, dc, 'item', f"hot:{dc}", gain, PRECACHE, cached)

    def run(self) -> PlacementResult:
        kept = filter_patterns(self.patterns, self.demand)
        self.distribution = sink_patterns(kept, self.layered, self.gamma_max, self.demand)
        for p in sorted(kept):
            by_root: Dict[str, Set[str]] = {}
            for y in sorted(self.demand.pattern_origins(p)):
                by_root.setdefault(self.layered.root_of(y), set()).add(y)
            for root in sorted(by_root):
                self._enqueue(root, _Unit(
                    'pattern', f"p{p}", frozenset(kept[p].items), (p,), frozenset(by_root[root]),
                ))

        while self.work:
            node = min(self.work, key=lambda n: (-self.layered.layer_of(n), n))
            self._process(node, self.work.pop(node))

        keys = sorted(
            (p, y) for p in self.patterns for y in self.demand.pattern_origins(p)
        )
        plans = self._plans(self.placement, keys)
        routing = routing_state_from_plans(plans, self.patterns, self.demand, self.gamma_max)
        if self.params.refine:
            routing = self._refine(routing)
        if self.params.precache and self.params.theta_quantile < 1:
            self._precache()

        logger.info(
            "Placement committed: %d patterns kept of %d, %d replicas, %d log entries",
            len(kept), len(self.patterns), self.placement.replica_count(), len(self.log),
        )
        return PlacementResult(self.placement, routing, self.log, self.distribution)


def place_all(layered, patterns, demand, cost_model, gamma_max, params: PlacementParams = None) -> PlacementResult:
    return OverlapPlacer(layered, patterns, demand, cost_model, gamma_max, params).run()


@dataclass
class DcCache:
    """Per-DC view used by online eviction."""
    dc: str
    heat_graph: HeatGraph
    state: HeatState
    home_items: FrozenSet[int]
    replicas: Set[int]
    routes: Dict[int, str]
    fallback: Dict[int, str]
    theta_c: Optional[float] = None

    @classmethod
    def build(cls, graph, partitioning, placement, dc, radius=2, steady: HeatState = None,
              quantile=None) -> 'DcCache':
        """
        Cache over the DC's held items. With a ``steady`` heat map the state
        starts from it and theta_c is fixed at the ``quantile`` of the
        replicas' positive steady heat.
        """
        held = placement.items_at(dc)
        vertices = graph.vertices_of(held) | set(partitioning.vertex_sets[dc])
        vertices |= _ball(graph, graph.vertices_of(held - set(partitioning.vertex_sets[dc])), 1)
        heat_graph = HeatGraph.from_graph(graph, vertices)
        homes = {x for x in held if partitioning.home_of(x) == dc}
        replicas = set(held) - homes
        state = HeatState.zeros(heat_graph) if steady is None else HeatState.from_values(heat_graph, steady.as_dict())
        cache = cls(
            dc, heat_graph, state, frozenset(homes), replicas,
            {x: dc for x in replicas}, {x: partitioning.home_of(x) for x in replicas},
        )
        if steady is not None:
            cache.theta_c = cache.threshold(graph, quantile)
        return cache

    def threshold(self, graph, quantile=None) -> float:
        heats = self.heats()
        values = [h for h in (item_heat(heats, graph, x) for x in self.replicas) if h > 0]
        return quantile_threshold(values, get_setting('THETA_C_QUANTILE') if quantile is None else quantile)

    def heats(self) -> Dict[int, float]:
        return self.state.as_dict()


def evict_cold(cache: DcCache, batch: Mapping[int, float], graph, dhd: DhdParams,
               theta_c=None, steps=1, quantile=None) -> Set[int]:
    """
    Inject batch read counts as heat, diffuse, and drop replicas colder than
    ``theta_c``. Without one the cache's own threshold applies; a cache
    that has none fixes it on the first batch at the ``quantile`` of the
    replicas' heat. Home copies stay.
    """
    injected = cache.state.heat + cache.heat_graph.vector(batch)
    state = HeatState(injected, cache.state.step, cache.state.nodes)
    for _ in range(steps):
        state = vertex_step(state, cache.heat_graph, dhd)
    cache.state = state
    heats = cache.heats()
    if theta_c is None:
        if cache.theta_c is None:
            cache.theta_c = cache.threshold(graph, quantile)
        theta_c = cache.theta_c
    evicted = {x for x in cache.replicas if item_heat(heats, graph, x) < theta_c}
    for x in evicted:
        cache.replicas.discard(x)
        cache.routes[x] = cache.fallback[x]
    if evicted:
        logger.info("Evicted %d cold replicas at %s (theta_c %.4g)", len(evicted), cache.dc, theta_c)
    return evicted


@dataclass(frozen=True)
class Insert:
    item: int
    home: str


@dataclass(frozen=True)
class Delete:
    item: int


@dataclass
class UpdateResult:
    placement: PlacementState
    routing: object
    removed: List[str] = field(default_factory=list)


def cleanup_order(item_id, placement, layered, home) -> List[str]:
    """Home first, then replicas in the order the removal climbs the hierarchy."""
    chain = [home] + layered.ancestors(home)

    def joins_at(dc):
        for depth, node in enumerate(chain):
            if dc in layered.dcs_under(node):
                return depth
        return len(chain)

    others = sorted(placement.holders(item_id) - {home}, key=lambda d: (joins_at(d), d))
    return ([home] if placement.holds(item_id, home) else []) + others


def apply_update(update, placement, routing, layered) -> UpdateResult:
    if isinstance(update, Insert):
        if update.item in placement:
            raise PlacementError(f"item {update.item} already exists")
        layered.wan.dc(update.home)
        replicas = placement.as_dict()
        replicas[update.item] = frozenset([update.home])
        return UpdateResult(PlacementState(replicas), routing, [])
    if isinstance(update, Delete):
        holders = placement.holders(update.item)
        item = layered.graph.items.get(update.item)
        home = layered.partitioning.home_of(update.item) if item is not None else min(holders)
        order = cleanup_order(update.item, placement, layered, home)
        logger.info("Deleting item %s from %s", update.item, ','.join(order))
        return UpdateResult(placement.without_item(update.item), routing.without_item(update.item), order)
    raise TypeError(f"unsupported update {update!r}")
