"""
Comparison strategies: Random-k and Top-k replica placement, both served by
uniformly random request routing.
"""
import logging
from typing import Dict, Iterable, Sequence

from .costs import DemandMatrix, PlacementState
from .exceptions import BaselineError
from .routing import RoutePlan, build_plan, holders_of
from .workload import stream

logger = logging.getLogger(__name__)


def place_random_k(items: Iterable[int], k, dcs: Sequence[str], seed, homes=None) -> PlacementState:
    """
    Each item keeps its home (when ``homes`` is given) and is topped up with
    uniformly chosen DCs until it is held at ``k`` distinct sites.
    """
    dcs = sorted(dcs)
    if k > len(dcs):
        raise BaselineError(f"cannot place {k} replicas on {len(dcs)} data centers")
    if k < 1:
        raise BaselineError(f"k must be >= 1, got {k}")
    rng = stream(seed, 'baselines')
    replicas: Dict[int, set] = {}
    for x in sorted(items):
        chosen = {homes[x]} if homes else set()
        others = [d for d in dcs if d not in chosen]
        extra = rng.choice(len(others), size=k - len(chosen), replace=False)
        chosen.update(others[int(i)] for i in sorted(extra))
        replicas[x] = chosen
    logger.info("Random-%d placed %d items", k, len(replicas))
    return PlacementState(replicas)


def place_top_k(items: Iterable[int], k, demand: DemandMatrix, dcs: Sequence[str]) -> PlacementState:
    """Replicas at the ``k`` DCs reading each item most, ties broken by DC id."""
    dcs = sorted(dcs)
    if not 1 <= k <= len(dcs):
        raise BaselineError(f"cannot place {k} replicas on {len(dcs)} data centers")
    replicas: Dict[int, set] = {}
    for x in sorted(items):
        reads = demand.item_reads(x)
        ranked = sorted(dcs, key=lambda d: (-reads.get(d, 0), d))
        replicas[x] = set(ranked[:k])
    logger.info("Top-%d placed %d items", k, len(replicas))
    return PlacementState(replicas)


def route_random(pattern, origin, placement: PlacementState, layered, rng) -> RoutePlan:
    """Serve every item of ``pattern`` from a uniformly drawn replica holder."""
    assignment = {}
    for x in sorted(pattern.items):
        holders = sorted(holders_of(placement, x))
        assignment[x] = holders[int(rng.integers(len(holders)))]
    return build_plan(origin, pattern.id, assignment, layered)
