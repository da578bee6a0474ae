"""
Scenario orchestration: load, layer, place, route and account, then write
the report files of a run.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import networkx as nx
from django.utils import timezone

from geolayer.baselines import place_random_k, place_top_k, route_random
from geolayer.conf import get_setting
from geolayer.costs import (
    LATENCY_TOLERANCE,
    CostBreakdown,
    CostModel,
    CostParams,
    DemandMatrix,
    PlacementState,
    RemoveReplica,
    RoutingState,
)
from geolayer.dhd import DhdParams, heat_rows
from geolayer.exceptions import ConfigError, GeoLayerError, OracleError, UnknownDCError
from geolayer.graph import conductivity_from_reads, load_graph
from geolayer.layers import LatencyThresholds, LayeredGraph
from geolayer.oracle import MAX_DECISION_BITS, gap, solve_exact
from geolayer.placement import DcCache, PlacementParams, dc_steady_heat, evict_cold, place_all, precache_hot
from geolayer.routing import (
    MigrationParams,
    build_plan,
    estimate_offline_comm,
    gather_plan,
    route_offline,
    routing_state_from_plans,
)
from geolayer.wan import load_price_book, load_wan_profile
from geolayer.workload import READ, WorkloadSpec, aggregate, generate, read_trace, stream, synthetic_graph, windows

from . import reports
from .config import resolve_path
from .models import ScenarioRun

logger = logging.getLogger(__name__)

STRATEGY_RE = re.compile(r'^(random|top)(\d+)$')
HITRATE_QUANTILES = tuple(q / 10 for q in range(1, 10))


@dataclass
class Scenario:
    """Everything a strategy needs, built once per run."""
    config: dict
    graph: object
    partitioning: object
    wan: object
    layered: LayeredGraph
    gamma_max: float
    patterns: dict
    trace: list
    demand: DemandMatrix
    history: DemandMatrix
    evaluation: list
    cost_model: CostModel
    window_count: int = 1

    @property
    def seed(self) -> int:
        return self.config['scenario']['seed']

    @property
    def model(self) -> dict:
        return self.config['model']


@dataclass
class Outcome:
    strategy: str
    placement: PlacementState
    routing: RoutingState
    log: object = None


@dataclass
class RunResult:
    name: str
    strategy: str
    output_dir: Path
    costs: CostBreakdown
    mean_latency_ms: float
    latency_violations: int
    wan_bytes: int
    migration_ratio: Optional[float]
    evicted_replicas: int
    files: List[str] = field(default_factory=list)
    gap_percent: Optional[float] = None
    feasible: bool = True


class ScenarioService:

    @classmethod
    def dhd_params(cls, model) -> DhdParams:
        return DhdParams.from_settings(alpha=model.get('alpha'), gamma=model.get('gamma'), beta=model.get('beta'))

    @classmethod
    def placement_params(cls, model, **overrides) -> PlacementParams:
        values = {
            'dhd': cls.dhd_params(model),
            'theta_quantile': model.get('theta_quantile'),
            'precache': model.get('precache', True),
            'refine': model.get('refine', True),
        }
        values.update(overrides)
        return PlacementParams.from_settings(**values)

    @classmethod
    def cost_params(cls, model) -> CostParams:
        defaults = CostParams.from_settings()
        return CostParams(
            lambda1=model.get('lambda1', defaults.lambda1),
            lambda2=model.get('lambda2', defaults.lambda2),
            association_scale=model.get('association_scale', defaults.association_scale),
            storage_months=model.get('storage_months', defaults.storage_months),
        )

    @classmethod
    def load_wan(cls, inputs):
        wan = load_wan_profile(inputs['wan'])
        if 'prices' in inputs:
            book = load_price_book(inputs['prices'])
            provider = inputs.get('provider', 'Alibaba')
            if provider not in book:
                raise ConfigError({'inputs.provider': [f"{provider!r} is not in {inputs['prices']}"]})
            wan = wan.with_prices(book, provider)
        return wan

    @classmethod
    def load(cls, config) -> Scenario:
        inputs, seed = config['inputs'], config['scenario']['seed']
        wan = cls.load_wan(inputs)
        if 'graph' in inputs:
            graph, partitioning = load_graph(
                inputs['graph'], inputs['partition'], inputs['vertex_bytes'], inputs['edge_bytes'],
            )
        else:
            synthetic = config['synthetic']
            graph, partitioning = synthetic_graph(
                synthetic['vertices'], wan.dc_ids, synthetic['degree'], seed, synthetic['cross_per_pair'],
            )
        for dc in partitioning.dcs:
            wan.dc(dc)
        if not nx.is_connected(graph.to_networkx()):
            logger.warning("Graph of %s is not connected", config['scenario']['name'])
        logger.info("Loaded graph with %d vertices and %d edges over %d DCs",
                    graph.vertex_count, len(graph.edge_ids), len(partitioning.dcs))

        interval = config['model'].get('layer_interval_ms') or get_setting('LAYER_INTERVAL_MS')
        max_rtt = max((link.rtt_s for link in wan.links.values()), default=0.0)
        thresholds = LatencyThresholds.covering(interval, max_rtt)
        gamma_max = config['scenario']['gamma_max_ms'] / 1000

        spec = WorkloadSpec(seed=seed, **config['workload'])
        patterns, trace = generate(spec, graph, partitioning, thresholds, gamma_max)
        if 'trace' in inputs:
            trace = read_trace(inputs['trace'])
            for record in trace:
                if record.op == READ and record.object_id not in patterns:
                    raise ConfigError({'inputs.trace': [f"unknown pattern {record.object_id} at seq {record.seq}"]})
                if record.origin not in wan.dc_ids:
                    raise UnknownDCError(record.origin)

        window_count = spec.window_count(len(trace))
        demand = aggregate(trace, patterns, window_count=window_count)
        splits = windows(len(trace), 2)
        while len(splits) < 2:
            splits.append((len(trace), len(trace)))
        history_window, evaluation_window = splits
        history = aggregate(trace, patterns, history_window)
        evaluation = [r for r in trace if evaluation_window[0] <= r.timestamp < evaluation_window[1]]

        edge_reads = {x: rate for x, rate in _item_totals(demand).items() if x in graph.endpoints}
        graph = conductivity_from_reads(graph, edge_reads)
        layered = LayeredGraph(graph, partitioning, wan, thresholds)
        cost_model = CostModel(graph.items, patterns, wan, cls.cost_params(config['model']))
        logger.info("Demand aggregated over %d windows of %d requests", window_count, spec.window_requests)
        return Scenario(config, graph, partitioning, wan, layered, gamma_max, patterns, trace,
                        demand, history, evaluation, cost_model, window_count)

    # strategies

    @classmethod
    def place(cls, scenario: Scenario, strategy) -> Outcome:
        if strategy == 'geolayer':
            result = place_all(
                scenario.layered, scenario.patterns, scenario.demand, scenario.cost_model,
                scenario.gamma_max, cls.placement_params(scenario.model),
            )
            return Outcome(strategy, result.placement, result.routing, result.log)

        match = STRATEGY_RE.match(strategy)
        if not match:
            raise ConfigError({'scenario.strategy': [f"unknown strategy {strategy!r}"]})
        kind, k = match.group(1), int(match.group(2))
        items, dcs = sorted(scenario.graph.items), scenario.wan.dc_ids
        if kind == 'random':
            placement = place_random_k(items, k, dcs, scenario.seed, scenario.partitioning.homes())
        else:
            placement = place_top_k(items, k, scenario.demand, dcs)

        rng = stream(scenario.seed, 'routes')
        plans = {
            (p, y): route_random(scenario.patterns[p], y, placement, scenario.layered, rng)
            for (p, y) in cls.request_keys(scenario)
        }
        routing = routing_state_from_plans(plans, scenario.patterns, scenario.demand, scenario.gamma_max)
        return Outcome(strategy, placement, routing)

    @classmethod
    def request_keys(cls, scenario) -> List[Tuple[int, str]]:
        return sorted(key for key, rate in scenario.demand.pattern_reads.items() if rate > 0)

    @classmethod
    def plans(cls, scenario, routing):
        """Per-request plans as the routing state serves them."""
        plans = {}
        for (p, y) in cls.request_keys(scenario):
            assignment = {x: routing.sigma[(x, y)] for x in scenario.patterns[p].items}
            plans[(p, y)] = build_plan(y, p, assignment, scenario.layered)
        return plans

    # accounting

    @classmethod
    def latency_rows(cls, scenario, plans):
        rows, violations = [], 0
        for record in scenario.trace:
            if record.op != READ:
                continue
            plan = plans[(record.object_id, record.origin)]
            requirement = scenario.patterns[record.object_id].requirement(scenario.gamma_max)
            ok = plan.latency <= requirement + LATENCY_TOLERANCE
            violations += 0 if ok else 1
            rows.append((record.seq, record.object_id, record.origin, plan.latency * 1000,
                         requirement * 1000, ' '.join(sorted(plan.servers)), ok))
        return rows, violations

    @classmethod
    def wan_rows(cls, scenario, placement, plans):
        read_bytes: Dict[Tuple[str, str], int] = {}
        write_bytes: Dict[Tuple[str, str], int] = {}
        for record in scenario.trace:
            if record.op == READ:
                plan = plans[(record.object_id, record.origin)]
                for d, served in plan.served.items():
                    if d == record.origin:
                        continue
                    size = sum(scenario.graph.item(x).size_bytes for x in served)
                    read_bytes[(d, record.origin)] = read_bytes.get((d, record.origin), 0) + size
            else:
                size = scenario.graph.item(record.object_id).size_bytes
                for d in sorted(placement.holders(record.object_id)):
                    if d != record.origin:
                        write_bytes[(record.origin, d)] = write_bytes.get((record.origin, d), 0) + size
        rows = []
        for pair in sorted(set(read_bytes) | set(write_bytes)):
            r, w = read_bytes.get(pair, 0), write_bytes.get(pair, 0)
            rows.append((pair[0], pair[1], r, w, r + w))
        return rows

    @classmethod
    def offline_rows(cls, scenario, placement):
        offline = scenario.config['offline']
        if not offline['requests']:
            return [], None
        params = MigrationParams.from_settings(
            scenario.layered, offline['job'], xi_fraction=scenario.model.get('xi_fraction'),
        )
        rng = stream(scenario.seed, 'offline')
        nx_graph = scenario.graph.to_networkx()
        rows, migrated, requested = [], 0, 0
        for request_id in range(offline['requests']):
            source = int(rng.integers(scenario.graph.vertex_count))
            ball = set(nx.ego_graph(nx_graph, source, radius=offline['radius']).nodes)
            items = sorted(ball | {
                e for e in scenario.graph.edge_ids if set(scenario.graph.endpoints[e]) <= ball
            })
            plan = route_offline(items, placement, scenario.layered, params)
            gather = min(
                estimate_offline_comm(gather_plan(items, placement, scenario.layered, d), params)
                for d in scenario.wan.dc_ids
            )
            rows.append((request_id, source, len(items), plan.requested_bytes, plan.migrated_bytes,
                         plan.migration_ratio, estimate_offline_comm(plan, params), gather, plan.strategy))
            migrated += plan.migrated_bytes
            requested += plan.requested_bytes
        ratio = migrated / requested if requested else 0.0
        rows.append(('all', '', sum(r[2] for r in rows), requested, migrated, ratio,
                     sum(r[6] for r in rows), sum(r[7] for r in rows), ''))
        return rows, ratio

    @classmethod
    def steady_heats(cls, scenario):
        params = cls.placement_params(scenario.model)
        return {
            dc: dc_steady_heat(scenario.graph, scenario.partitioning, dc, scenario.history, params)
            for dc in scenario.partitioning.dcs
        }

    @classmethod
    def hitrate_rows(cls, scenario, steady):
        """Hit rate of pre-caching per theta quantile, judged on the evaluation half of the trace."""
        homes = scenario.partitioning.homes()
        accessed: Dict[str, set] = {dc: set() for dc in scenario.partitioning.dcs}
        for record in scenario.evaluation:
            if record.op == READ:
                accessed[record.origin].update(scenario.patterns[record.object_id].items)
        rows = []
        for q in HITRATE_QUANTILES:
            cached_total, hits = 0, 0
            for dc in scenario.partitioning.dcs:
                local = {x for x, home in homes.items() if home == dc}
                cached = precache_hot(steady[dc], scenario.graph, q, local)
                cached_total += len(cached)
                hits += len(cached & accessed[dc])
            rows.append((q, cached_total, hits, hits / cached_total if cached_total else 0.0))
        return rows

    @classmethod
    def maintain(cls, scenario, outcome) -> Tuple[Outcome, int]:
        """
        Replay the evaluation reads in batches through heat-driven eviction
        and drop the evicted replicas from the placement. A replica whose loss
        would break a read pattern's latency requirement is re-admitted.
        Baseline placements are static.
        """
        if outcome.strategy != 'geolayer' or not scenario.model.get('maintain', True):
            return outcome, 0
        dhd = cls.dhd_params(scenario.model)
        theta_c_quantile = scenario.model.get('theta_c_quantile')
        batch_size = get_setting('EVICTION_BATCH')
        reads = [r for r in scenario.evaluation if r.op == READ]
        placement, routing = outcome.placement, outcome.routing
        evicted = 0
        for dc in scenario.partitioning.dcs:
            cache = DcCache.build(scenario.graph, scenario.partitioning, placement, dc)
            if not cache.replicas:
                continue
            for start, end in windows(len(reads), get_setting('MAINTENANCE_WINDOWS')):
                for offset in range(start, end, batch_size):
                    batch = cls.served_heat(scenario, routing, dc, reads[offset:min(offset + batch_size, end)])
                    for x in sorted(evict_cold(cache, batch, scenario.graph, dhd, quantile=theta_c_quantile)):
                        after = scenario.cost_model.apply(RemoveReplica(x, dc), placement, routing, scenario.demand)
                        if cls.breaks_latency(scenario, x, routing, after[1]):
                            logger.info("Re-admitted replica of item %d at %s to keep pattern latency", x, dc)
                            cache.replicas.add(x)
                            cache.routes[x] = dc
                            continue
                        placement, routing = after
                        evicted += 1
        if evicted:
            logger.info("Maintenance dropped %d replicas, %d remain", evicted, placement.replica_count())
        return Outcome(outcome.strategy, placement, routing, outcome.log), evicted

    @classmethod
    def served_heat(cls, scenario, routing, dc, records) -> Dict[int, float]:
        """Read counts on the vertices of items ``dc`` serves to ``records``."""
        batch: Dict[int, float] = {}
        for record in records:
            for x in scenario.patterns[record.object_id].items:
                if routing.sigma.get((x, record.origin)) != dc:
                    continue
                for v in scenario.graph.vertices_of([x]):
                    batch[v] = batch.get(v, 0.0) + 1.0
        return batch

    @classmethod
    def breaks_latency(cls, scenario, item_id, before, after) -> bool:
        model = scenario.cost_model
        for p in model.patterns_with(item_id):
            for y in scenario.demand.pattern_origins(p):
                if (model.pattern_latency_ok(p, y, before, scenario.gamma_max)
                        and not model.pattern_latency_ok(p, y, after, scenario.gamma_max)):
                    return True
        return False

    # oracle

    @classmethod
    def oracle_instance(cls, scenario, max_patterns=6, max_items=None):
        """Sub-scenario of the first read patterns whose items fit the enumeration bound."""
        limit = max_items or MAX_DECISION_BITS // len(scenario.wan.dc_ids)
        chosen, items = [], set()
        for p in sorted(scenario.patterns):
            if not scenario.demand.pattern_origins(p):
                continue
            union = items | set(scenario.patterns[p].items)
            if len(union) > limit:
                continue
            chosen.append(p)
            items = union
            if len(chosen) == max_patterns:
                break
        if not chosen:
            raise OracleError(f"no read pattern fits within {limit} items")
        patterns = {p: scenario.patterns[p] for p in chosen}
        trace = [
            r for r in scenario.trace
            if (r.op == READ and r.object_id in patterns) or (r.op != READ and r.object_id in items)
        ]
        demand = aggregate(trace, patterns, window_count=scenario.window_count)
        cost_model = CostModel({x: scenario.graph.items[x] for x in sorted(items)}, patterns,
                               scenario.wan, scenario.cost_model.params)
        return patterns, demand, cost_model

    @classmethod
    def solve_gap(cls, scenario, max_patterns=6, max_items=None):
        patterns, demand, cost_model = cls.oracle_instance(scenario, max_patterns, max_items)
        result = place_all(scenario.layered, patterns, demand, cost_model, scenario.gamma_max,
                           cls.placement_params(scenario.model, precache=False))
        placement = PlacementState({x: result.placement.holders(x) for x in cost_model.items})
        routing = RoutingState(
            {key: d for key, d in result.routing.sigma.items() if key[0] in cost_model.items},
            result.routing.rho,
        )
        heuristic = cost_model.total_objective(placement, routing, demand)
        feasible = cost_model.check_constraints(placement, routing, demand, scenario.gamma_max).feasible
        optimum = solve_exact(cost_model.items, patterns, scenario.wan, demand, scenario.gamma_max,
                              cost_model.params)
        row = (len(cost_model.items), len(patterns), heuristic.total, optimum.total,
               gap(heuristic.total, optimum.total), optimum.explored)
        return row, feasible, optimum

    # pipeline

    @classmethod
    def output_dir(cls, config, output_dir=None) -> Path:
        if output_dir:
            path = Path(output_dir)
        elif config['scenario'].get('output'):
            path = resolve_path(config['scenario']['output'], Path(config['source']).resolve().parent)
        else:
            name = f"{config['scenario']['name']}-{config['scenario']['strategy']}"
            path = Path(get_setting('OUTPUT_DIR')) / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    @classmethod
    def run(cls, config, output_dir=None, dump_layers=False, dump_heat=False, dump_plans=False,
            record=None) -> RunResult:
        """Execute one scenario end to end and write its report files."""
        record = get_setting('RECORD_RUNS') if record is None else record
        strategy = config['scenario']['strategy']
        directory = cls.output_dir(config, output_dir)
        run = None
        if record:
            run = ScenarioRun.objects.create(
                name=config['scenario']['name'], strategy=strategy, seed=config['scenario']['seed'],
                config_path=config.get('source', ''), output_dir=str(directory),
            )
        try:
            result = cls._run(config, strategy, directory, dump_layers, dump_heat, dump_plans)
        except GeoLayerError as exc:
            if run is not None:
                run.status = 'failed'
                run.error = f"{exc.module}: {exc}"
                run.finished_at = timezone.now()
                run.save()
            raise
        if run is not None:
            cls.record(run, result)
        return result

    @classmethod
    def _run(cls, config, strategy, directory, dump_layers, dump_heat, dump_plans) -> RunResult:
        scenario = cls.load(config)
        outcome, evicted = cls.maintain(scenario, cls.place(scenario, strategy))
        plans = cls.plans(scenario, outcome.routing)
        costs = scenario.cost_model.total_objective(outcome.placement, outcome.routing, scenario.demand)
        report = scenario.cost_model.check_constraints(
            outcome.placement, outcome.routing, scenario.demand, scenario.gamma_max,
        )
        for violation in report.violations:
            logger.warning("Constraint (%s) violated: %s", violation.constraint, violation.witness)

        latency_rows, violations = cls.latency_rows(scenario, plans)
        wan_rows = cls.wan_rows(scenario, outcome.placement, plans)
        migration_rows, migration_ratio = cls.offline_rows(scenario, outcome.placement)
        steady = cls.steady_heats(scenario)
        hitrate_rows = cls.hitrate_rows(scenario, steady)

        files = [
            reports.write_csv(directory, reports.COSTS, [costs.as_row()]),
            reports.write_csv(directory, reports.LATENCY, latency_rows),
            reports.write_csv(directory, reports.WAN, wan_rows),
            reports.write_csv(directory, reports.MIGRATION, migration_rows),
            reports.write_csv(directory, reports.HITRATE, hitrate_rows),
        ]
        gap_percent = None
        if config['oracle']['enabled']:
            row, _, _ = cls.solve_gap(scenario, config['oracle']['max_patterns'], config['oracle'].get('max_items'))
            gap_percent = row[4]
            files.append(reports.write_csv(directory, reports.GAP, [row]))
        if dump_layers:
            files.append(reports.write_text(directory, reports.LAYERS, scenario.layered.dump()))
        if dump_heat:
            rows = [(dc, v, step, h) for dc in sorted(steady) for step, v, h in heat_rows(steady[dc])]
            files.append(reports.write_csv(directory, reports.HEAT, rows))
        if dump_plans:
            rows = []
            for request_id, key in enumerate(sorted(plans)):
                rows.extend(plans[key].rows(request_id, scenario.graph))
            files.append(reports.write_csv(directory, reports.PLANS, rows))
            if outcome.log is not None:
                files.append(reports.write_csv(directory, reports.PLACEMENT_LOG, outcome.log.rows()))

        latencies = [row[3] for row in latency_rows]
        result = RunResult(
            name=config['scenario']['name'],
            strategy=strategy,
            output_dir=directory,
            costs=costs,
            mean_latency_ms=sum(latencies) / len(latencies) if latencies else 0.0,
            latency_violations=violations,
            wan_bytes=sum(row[4] for row in wan_rows),
            migration_ratio=migration_ratio,
            evicted_replicas=evicted,
            files=[path.name for path in files],
            gap_percent=gap_percent,
            feasible=report.feasible,
        )
        logger.info("Scenario %s (%s) written to %s: total cost %.6g",
                    result.name, strategy, directory, costs.total)
        return result

    @classmethod
    def record(cls, run: ScenarioRun, result: RunResult) -> ScenarioRun:
        run.status = 'succeeded'
        run.storage_cost = result.costs.storage
        run.read_cost = result.costs.read
        run.write_cost = result.costs.write
        run.association_cost = result.costs.association
        run.total_cost = result.costs.total
        run.mean_latency_ms = result.mean_latency_ms
        run.latency_violations = result.latency_violations
        run.wan_bytes = result.wan_bytes
        run.migration_ratio = result.migration_ratio
        run.evicted_replicas = result.evicted_replicas
        run.finished_at = timezone.now()
        run.save()
        return run

    @classmethod
    def compare_runs(cls, a: ScenarioRun, b: ScenarioRun):
        """Headline metrics of run ``b`` normalized to run ``a``."""
        def metrics(run):
            values = dict(run.costs())
            values['mean_latency_ms'] = run.mean_latency_ms
            values['wan_bytes'] = run.wan_bytes
            return {k: float(v) for k, v in values.items() if v is not None}
        return reports.compare_values(metrics(a), metrics(b))


def _item_totals(demand) -> Dict[int, float]:
    totals: Dict[int, float] = {}
    for (x, _), rate in demand.reads.items():
        totals[x] = totals.get(x, 0.0) + rate
    return totals
