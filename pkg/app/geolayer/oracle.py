"""
Exact minimum of the placement objective on tiny instances, and an objective
evaluator written independently of ``costs.CostModel``.

The search runs over serving assignments σ(x, y) for every read pair. The
placement implied by σ is minimal: an item is held exactly where it is
served, and an item nobody reads takes its cheapest single replica. Extra
replicas never lower the objective, so the minimum over σ is the minimum of
the full problem.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .costs import LATENCY_TOLERANCE, CostBreakdown, CostParams, DemandMatrix, PlacementState, RoutingState
from .exceptions import EnumerationBoundError, InfeasibleError, ZeroOptimumError
from .wan import GB, MILLION

logger = logging.getLogger(__name__)

MAX_DECISION_BITS = 30


def _latency(wan, origin, server, payload):
    if origin == server:
        return 0.0
    link = wan.link(server, origin)
    return link.rtt_s + payload * 8 / link.bandwidth_bps


def evaluate_objective(items, patterns, wan, params: CostParams,
                       placement: PlacementState, routing: RoutingState,
                       demand: DemandMatrix) -> CostBreakdown:
    """Storage, read, write and association terms by direct summation."""
    storage = 0.0
    for x in sorted(placement.as_dict()):
        size = items[x].size_bytes
        for d in sorted(placement.holders(x)):
            storage += size / GB * wan.dc(d).store_price * params.storage_months

    read = 0.0
    for (x, y) in sorted(demand.reads):
        rate = demand.reads[(x, y)]
        if rate <= 0:
            continue
        d = routing.sigma.get((x, y))
        if d is None or not placement.holds(x, d):
            raise InfeasibleError('a', f"item {x} from {y}")
        unit = wan.dc(d).read_price / MILLION
        if y != d:
            unit += items[x].size_bytes / GB * wan.link(d, y).transfer_price
        read += rate * unit

    write = 0.0
    for (x, y) in sorted(demand.writes):
        rate = demand.writes[(x, y)]
        if rate <= 0:
            continue
        unit = wan.dc(y).write_price / MILLION
        for d in sorted(placement.holders(x)):
            if d == y:
                continue
            unit += wan.dc(d).write_price / MILLION + items[x].size_bytes / GB * wan.link(y, d).transfer_price
        write += rate * unit

    association = 0.0
    for (p, y) in sorted(demand.pattern_reads):
        rate = demand.pattern_reads[(p, y)]
        if rate <= 0:
            continue
        servers = routing.rho.get((p, y))
        if not servers:
            raise InfeasibleError('b', f"pattern {p} from {y}")
        payload = {d: 0 for d in servers}
        for x in patterns[p].items:
            d = routing.sigma.get((x, y))
            if d is not None:
                payload[d] = payload.get(d, 0) + items[x].size_bytes
        latencies = [_latency(wan, y, d, payload[d]) for d in sorted(servers)]
        fastest, slowest = min(latencies), max(latencies)
        spread = (slowest - fastest) / fastest if fastest > 0 else 0.0
        association += rate * (params.lambda1 * (len(servers) - 1) + params.lambda2 * spread) * params.association_scale

    return CostBreakdown(storage=storage, read=read, write=write, association=association)


@dataclass
class OracleSolution:
    placement: PlacementState
    routing: RoutingState
    cost: CostBreakdown
    explored: int

    @property
    def total(self) -> float:
        return self.cost.total


class ExactSolver:
    """Branch and bound over σ in lexicographic order of ``(item, origin)`` pairs."""

    def __init__(self, items, patterns, wan, demand: DemandMatrix, gamma_max,
                 params: CostParams = None, dcs: Sequence[str] = None):
        self.items = items
        self.patterns = patterns
        self.wan = wan
        self.demand = demand
        self.gamma_max = gamma_max
        self.params = params or CostParams()
        self.dcs = sorted(dcs or wan.dc_ids)

        self.pairs: List[Tuple[int, str]] = sorted(k for k, rate in demand.reads.items() if rate > 0)
        self.read_items = sorted({x for x, _ in self.pairs})
        self.last_pair_of: Dict[int, int] = {x: i for i, (x, _) in enumerate(self.pairs)}

        # pattern requests that become fully decided at a given pair index
        self.requests: Dict[Tuple[int, str], List[int]] = {}
        for (p, y), rate in sorted(demand.pattern_reads.items()):
            if rate <= 0:
                continue
            served = [x for x in patterns[p].items if (x, y) in demand.reads and demand.reads[(x, y)] > 0]
            if not served:
                raise InfeasibleError('b', f"pattern {p} from {y} reads no item")
            self.requests[(p, y)] = served
        self.closing: Dict[int, List[Tuple[int, str]]] = {}
        self.requests_of_pair: Dict[Tuple[int, str], List[Tuple[int, str]]] = {}
        for key, served in self.requests.items():
            index = max(self.pairs.index((x, key[1])) for x in served)
            self.closing.setdefault(index, []).append(key)
            for x in served:
                self.requests_of_pair.setdefault((x, key[1]), []).append(key)

        self._single = {x: min(self.dcs, key=lambda d, x=x: (self._replica_cost(x, {d}), d))
                        for x in items}
        self._floor = {x: self._replica_cost(x, {self._single[x]}) for x in items}
        self._read_floor = [min(self._unit_read(x, y, d) for d in self.dcs) for x, y in self.pairs]
        self._suffix = [0.0] * (len(self.pairs) + 1)
        for i in range(len(self.pairs) - 1, -1, -1):
            self._suffix[i] = self._suffix[i + 1] + self._read_floor[i]

    def _unit_read(self, x, y, d) -> float:
        rate = self.demand.reads[(x, y)]
        unit = self.wan.dc(d).read_price / MILLION
        if y != d:
            unit += self.items[x].size_bytes / GB * self.wan.link(d, y).transfer_price
        return rate * unit

    def _replica_cost(self, x, holders) -> float:
        size = self.items[x].size_bytes
        cost = sum(size / GB * self.wan.dc(d).store_price * self.params.storage_months for d in holders)
        for y, rate in self.demand.item_writes(x).items():
            unit = self.wan.dc(y).write_price / MILLION
            for d in holders:
                if d != y:
                    unit += self.wan.dc(d).write_price / MILLION + size / GB * self.wan.link(y, d).transfer_price
            cost += rate * unit
        return cost

    def _association(self, key, sigma) -> float:
        p, y = key
        payload: Dict[str, int] = {}
        for x in self.requests[key]:
            d = sigma[(x, y)]
            payload[d] = payload.get(d, 0) + self.items[x].size_bytes
        latencies = [_latency(self.wan, y, d, b) for d, b in payload.items()]
        fastest, slowest = min(latencies), max(latencies)
        spread = (slowest - fastest) / fastest if fastest > 0 else 0.0
        rate = self.demand.pattern_reads[key]
        return rate * (self.params.lambda1 * (len(payload) - 1) + self.params.lambda2 * spread) \
            * self.params.association_scale

    def _request_latency_ok(self, key, sigma) -> bool:
        """Constraint (d) on the part of a request decided so far."""
        p, y = key
        payload: Dict[str, int] = {}
        for x in self.requests[key]:
            d = sigma.get((x, y))
            if d is not None:
                payload[d] = payload.get(d, 0) + self.items[x].size_bytes
        requirement = self.patterns[p].requirement(self.gamma_max)
        return all(_latency(self.wan, y, d, b) <= requirement + LATENCY_TOLERANCE
                   for d, b in payload.items())

    def _states(self, sigma) -> Tuple[PlacementState, RoutingState]:
        replicas: Dict[int, set] = {x: set() for x in self.items}
        for (x, _), d in sigma.items():
            replicas[x].add(d)
        for x, held in replicas.items():
            if not held:
                held.add(self._single[x])
        routing = RoutingState.from_sigma(sigma, self.patterns, self.demand)
        return PlacementState(replicas), routing

    def _feasible(self, sigma, budget) -> bool:
        weighted = sum(self.demand.reads[(x, y)] * _latency(self.wan, y, sigma[(x, y)], self.items[x].size_bytes)
                       for x, y in self.pairs)
        return weighted <= budget and all(self._request_latency_ok(key, sigma) for key in self.requests)

    def solve(self) -> OracleSolution:
        for x, y in self.pairs:
            if y not in self.dcs:
                raise InfeasibleError('e', f"origin {y} of item {x} is not a candidate DC")
        if len(self.items) * len(self.dcs) > MAX_DECISION_BITS:
            raise EnumerationBoundError(
                f"{len(self.items)} items x {len(self.dcs)} DCs exceeds {MAX_DECISION_BITS} decision bits"
            )

        unread_cost = sum(self._floor[x] for x in self.items if x not in self.last_pair_of)
        budget = self.gamma_max * len(self.items) + LATENCY_TOLERANCE * len(self.items)
        best: Dict[str, object] = {'total': float('inf'), 'key': None, 'sigma': None}
        pruned: Dict[str, int] = {'c': 0, 'd': 0}
        explored = 0

        def consider(sigma):
            placement, routing = self._states(sigma)
            cost = evaluate_objective(self.items, self.patterns, self.wan, self.params,
                                      placement, routing, self.demand)
            key = tuple(sigma[pair] for pair in self.pairs)
            if best['key'] is None:
                best.update(total=cost.total, key=key, sigma=dict(sigma))
                return
            tol = 1e-12 * max(1.0, abs(best['total']))
            if cost.total < best['total'] - tol or (
                    abs(cost.total - best['total']) <= tol and key < best['key']):
                best.update(total=cost.total, key=key, sigma=dict(sigma))

        local = {(x, y): y for x, y in self.pairs}
        if self._feasible(local, budget):
            consider(local)

        sigma: Dict[Tuple[int, str], str] = {}
        holders: Dict[int, Dict[str, int]] = {x: {} for x in self.read_items}

        def search(i, committed, weighted):
            nonlocal explored
            explored += 1
            if i == len(self.pairs):
                consider(sigma)
                return
            x, y = self.pairs[i]
            rate = self.demand.reads[(x, y)]
            size = self.items[x].size_bytes
            for d in self.dcs:
                latency = rate * _latency(self.wan, y, d, size)
                if weighted + latency > budget:
                    pruned['c'] += 1
                    continue
                sigma[(x, y)] = d
                holders[x][d] = holders[x].get(d, 0) + 1
                if not all(self._request_latency_ok(key, sigma) for key in self.requests_of_pair.get((x, y), ())):
                    pruned['d'] += 1
                else:
                    cost = committed + self._unit_read(x, y, d)
                    if self.last_pair_of[x] == i:
                        cost += self._replica_cost(x, sorted(holders[x]))
                    for key in self.closing.get(i, ()):
                        cost += self._association(key, sigma)
                    open_items = {p for p, _ in self.pairs[i + 1:]} - {x}
                    partial = 0.0
                    if self.last_pair_of[x] != i:
                        partial = self._replica_cost(x, sorted(holders[x]))
                    bound = cost + partial + self._suffix[i + 1] + unread_cost + sum(
                        self._floor[z] for z in open_items
                    )
                    tol = 1e-12 * max(1.0, abs(best['total']))
                    if bound <= best['total'] + tol:
                        search(i + 1, cost, weighted + latency)
                holders[x][d] -= 1
                if not holders[x][d]:
                    del holders[x][d]
                del sigma[(x, y)]

        search(0, 0.0, 0.0)
        if best['sigma'] is None:
            constraint = max(pruned, key=lambda c: (pruned[c], c))
            logger.warning("No feasible assignment; constraint (%s) pruned most branches", constraint)
            raise InfeasibleError(constraint, f"{pruned[constraint]} branches pruned")

        placement, routing = self._states(best['sigma'])
        cost = evaluate_objective(self.items, self.patterns, self.wan, self.params,
                                  placement, routing, self.demand)
        logger.info("Exact optimum %.6g after %d search nodes", cost.total, explored)
        return OracleSolution(placement, routing, cost, explored)


def solve_exact(items, patterns, wan, demand, gamma_max, params: CostParams = None,
                dcs: Sequence[str] = None) -> OracleSolution:
    return ExactSolver(items, patterns, wan, demand, gamma_max, params, dcs).solve()


def gap(cost, optimum) -> float:
    """Relative excess of ``cost`` over ``optimum`` in percent."""
    if optimum <= 0:
        raise ZeroOptimumError(optimum)
    return (cost - optimum) / optimum * 100


__all__ = ['ExactSolver', 'OracleSolution', 'evaluate_objective', 'gap', 'solve_exact']
