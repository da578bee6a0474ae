"""
Directed heat diffusion over the vertex graph.

Heat flows only from hotter to colder neighbors, split across the sender's
strictly-colder neighbors and scaled by edge conductivity A_uv. Every step
decays all heat by gamma; source vertices re-inject beta * Q each step.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .conf import get_setting
from .exceptions import DhdError, SingularSystemError

logger = logging.getLogger(__name__)


class HeatGraph:
    """
    Undirected weighted graph in array form. Parallel edges merge with summed
    conductivity, self-loops are dropped.
    """

    def __init__(self, nodes: Sequence[int], edges: Iterable[Tuple[int, int, float]] = ()):
        self.nodes: Tuple[int, ...] = tuple(nodes)
        self.index: Dict[int, int] = {v: i for i, v in enumerate(self.nodes)}
        merged: Dict[Tuple[int, int], float] = {}
        for u, v, a in edges:
            if u == v or u not in self.index or v not in self.index:
                continue
            i, j = sorted((self.index[u], self.index[v]))
            merged[(i, j)] = merged.get((i, j), 0.0) + float(a)
        pairs = sorted(merged)
        self.src = np.array([i for i, _ in pairs], dtype=np.int64)
        self.dst = np.array([j for _, j in pairs], dtype=np.int64)
        self.conductivity = np.array([merged[p] for p in pairs], dtype=float)

    def __repr__(self):
        return f"<HeatGraph n={self.n} m={len(self.src)}>"

    @classmethod
    def from_graph(cls, graph, vertices=None) -> 'HeatGraph':
        g = graph.to_networkx(vertices)
        return cls(sorted(g.nodes), ((u, v, d['weight']) for u, v, d in g.edges(data=True)))

    @property
    def n(self) -> int:
        return len(self.nodes)

    def max_weighted_degree(self) -> float:
        degree = np.zeros(self.n)
        np.add.at(degree, self.src, self.conductivity)
        np.add.at(degree, self.dst, self.conductivity)
        return float(degree.max()) if self.n else 0.0

    def vector(self, values: Mapping[int, float]) -> np.ndarray:
        out = np.zeros(self.n)
        for v, value in values.items():
            if v in self.index:
                out[self.index[v]] = value
        return out


@dataclass(frozen=True)
class DhdParams:
    alpha: float = 0.5
    gamma: float = 0.1
    beta: float = 0.3
    max_iters: int = 200
    residual_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise DhdError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.alpha > 0:
            raise DhdError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise DhdError(f"beta must be non-negative, got {self.beta}")
        if self.max_iters < 0:
            raise DhdError(f"max_iters must be non-negative, got {self.max_iters}")

    @classmethod
    def from_settings(cls, **overrides) -> 'DhdParams':
        values = {
            'alpha': get_setting('ALPHA'),
            'gamma': get_setting('GAMMA'),
            'beta': get_setting('BETA'),
            'max_iters': get_setting('MAX_ITERS'),
            'residual_tol': get_setting('RESIDUAL_TOL'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class HeatState:
    heat: np.ndarray
    step: int = 0
    nodes: Tuple[int, ...] = field(default=(), compare=False)

    @classmethod
    def zeros(cls, heat_graph: HeatGraph) -> 'HeatState':
        return cls(np.zeros(heat_graph.n), 0, heat_graph.nodes)

    @classmethod
    def from_values(cls, heat_graph: HeatGraph, values: Mapping[int, float]) -> 'HeatState':
        return cls(heat_graph.vector(values), 0, heat_graph.nodes)

    def of(self, vertex) -> float:
        try:
            return float(self.heat[self.nodes.index(vertex)])
        except ValueError:
            return 0.0

    def as_dict(self) -> Dict[int, float]:
        return {v: float(h) for v, h in zip(self.nodes, self.heat)}

    def total(self) -> float:
        return float(self.heat.sum())


@dataclass
class SourceState:
    """Heat sources 𝒪 with their injection level Q_v."""
    sources: FrozenSet[int]
    q: np.ndarray
    q0: float
    pi: float
    delta_q: float
    nodes: Tuple[int, ...] = ()

    @classmethod
    def initialize(cls, heat_graph: HeatGraph, sources: Iterable[int],
                   half_life=None, delta_q=None) -> 'SourceState':
        half_life = half_life if half_life is not None else get_setting('HALF_LIFE_STEPS')
        delta_q = delta_q if delta_q is not None else get_setting('DELTA_Q')
        sources = frozenset(v for v in sources if v in heat_graph.index)
        q0 = 1 / len(sources) if sources else 0.0
        q = heat_graph.vector({v: q0 for v in sources})
        return cls(sources, q, q0, math.log(2) / half_life, delta_q, heat_graph.nodes)

    @classmethod
    def empty(cls, heat_graph: HeatGraph) -> 'SourceState':
        return cls(frozenset(), np.zeros(heat_graph.n), 0.0, 0.0, 0.0, heat_graph.nodes)


def source_step(sources: SourceState, step, access_counts: Mapping[int, float] = None) -> SourceState:
    """Q_v = Q_v^0 e^(-πk) + ΔQ * accesses(v) for sources, zero elsewhere."""
    access_counts = access_counts or {}
    decayed = sources.q0 * math.exp(-sources.pi * step)
    q = np.zeros(len(sources.nodes))
    for i, v in enumerate(sources.nodes):
        if v in sources.sources:
            q[i] = decayed + sources.delta_q * access_counts.get(v, 0)
    return replace(sources, q=q)


def _lower_counts(heat, heat_graph: HeatGraph) -> np.ndarray:
    hu, hv = heat[heat_graph.src], heat[heat_graph.dst]
    lower = np.zeros(heat_graph.n)
    np.add.at(lower, heat_graph.src, (hv < hu).astype(float))
    np.add.at(lower, heat_graph.dst, (hu < hv).astype(float))
    return lower


def edge_transfer(u, v, state: HeatState, heat_graph: HeatGraph, params: DhdParams) -> float:
    """Heat sent from ``u`` to ``v`` in one step."""
    i, j = heat_graph.index[u], heat_graph.index[v]
    a, b = sorted((i, j))
    hits = np.nonzero((heat_graph.src == a) & (heat_graph.dst == b))[0]
    if not len(hits):
        raise DhdError(f"no edge between {u} and {v}")
    diff = state.heat[i] - state.heat[j]
    if diff <= 0:
        return 0.0
    lower = _lower_counts(state.heat, heat_graph)[i]
    return params.alpha * heat_graph.conductivity[hits[0]] / lower * diff


def _transfer_delta(heat, heat_graph: HeatGraph, alpha) -> np.ndarray:
    """Net heat received by each vertex from all ReLU-gated edge transfers."""
    lower = _lower_counts(heat, heat_graph)
    diff = heat[heat_graph.src] - heat[heat_graph.dst]
    out_src = np.maximum(lower[heat_graph.src], 1.0)
    out_dst = np.maximum(lower[heat_graph.dst], 1.0)
    flow = np.where(
        diff > 0,
        alpha * heat_graph.conductivity / out_src * diff,
        np.where(diff < 0, alpha * heat_graph.conductivity / out_dst * diff, 0.0),
    )
    delta = np.zeros(heat_graph.n)
    np.add.at(delta, heat_graph.src, -flow)
    np.add.at(delta, heat_graph.dst, flow)
    return delta


def vertex_step(state: HeatState, heat_graph: HeatGraph, params: DhdParams) -> HeatState:
    """All transfers computed from step-k heat, then decay."""
    heat = state.heat
    if not heat_graph.n:
        return replace(state, step=state.step + 1)
    delta = _transfer_delta(heat, heat_graph, params.alpha)
    return HeatState((1 - params.gamma) * (heat + delta), state.step + 1, state.nodes)


def coupled_step(state: HeatState, sources: SourceState, heat_graph: HeatGraph,
                 params: DhdParams) -> HeatState:
    """Source-coupled update computed edge-wise; equal to system_step without the dense matrix."""
    if not heat_graph.n:
        return replace(state, step=state.step + 1)
    delta = _transfer_delta(state.heat, heat_graph, params.alpha)
    updated = (1 - params.gamma) * (state.heat + delta) + params.beta * sources.q
    return HeatState(updated, state.step + 1, state.nodes)


def directional_laplacian(heat, heat_graph: HeatGraph) -> np.ndarray:
    """
    L[i, j] = A_ij / n_out(hotter endpoint) for neighbors with different
    heat; the diagonal is minus the off-diagonal row sum.
    """
    n = heat_graph.n
    laplacian = np.zeros((n, n))
    lower = _lower_counts(heat, heat_graph)
    for i, j, a in zip(heat_graph.src, heat_graph.dst, heat_graph.conductivity):
        if heat[i] > heat[j]:
            coefficient = a / lower[i]
        elif heat[j] > heat[i]:
            coefficient = a / lower[j]
        else:
            continue
        laplacian[i, j] += coefficient
        laplacian[j, i] += coefficient
    laplacian[np.diag_indices(n)] = -laplacian.sum(axis=1)
    return laplacian


def system_step(state: HeatState, sources: SourceState, heat_graph: HeatGraph,
                params: DhdParams) -> HeatState:
    heat = state.heat
    laplacian = directional_laplacian(heat, heat_graph)
    updated = (1 - params.gamma) * (heat + params.alpha * laplacian @ heat) + params.beta * sources.q
    return HeatState(updated, state.step + 1, state.nodes)


def run_to_steady(state: HeatState, sources: SourceState, heat_graph: HeatGraph,
                  params: DhdParams,
                  on_step: Optional[Callable[[HeatState], None]] = None) -> Tuple[HeatState, bool, float]:
    """Iterate the source-coupled update with fixed sources until the sup-norm change drops below tolerance."""
    if params.max_iters == 0:
        return state, False, math.inf
    current, residual = state, math.inf
    for _ in range(params.max_iters):
        following = coupled_step(current, sources, heat_graph, params)
        residual = float(np.max(np.abs(following.heat - current.heat))) if heat_graph.n else 0.0
        current = following
        if on_step is not None:
            on_step(current)
        if residual < params.residual_tol:
            return current, True, residual
    logger.warning("DHD did not converge in %d steps (residual %.3g)", params.max_iters, residual)
    return current, False, residual


@dataclass(frozen=True)
class ConvergenceReport:
    ok: bool
    norm: float
    bound: float
    margin: float


def check_convergence_condition(laplacian, params: DhdParams) -> ConvergenceReport:
    """Compare alpha with gamma / ((1 - gamma) * ||L||_inf)."""
    laplacian = np.asarray(laplacian, dtype=float)
    norm = float(np.abs(laplacian).sum(axis=1).max()) if laplacian.size else 0.0
    bound = math.inf if norm == 0 else params.gamma / ((1 - params.gamma) * norm)
    report = ConvergenceReport(params.alpha < bound, norm, bound, bound - params.alpha)
    if not report.ok:
        logger.warning("Convergence bound violated: alpha=%s >= %.4g", params.alpha, bound)
    return report


def closed_form_steady(laplacian, q, params: DhdParams) -> np.ndarray:
    """Solve (gamma I - alpha (1 - gamma) L) H = beta Q."""
    laplacian = np.asarray(laplacian, dtype=float)
    n = laplacian.shape[0]
    system = params.gamma * np.eye(n) - params.alpha * (1 - params.gamma) * laplacian
    try:
        return np.linalg.solve(system, params.beta * np.asarray(q, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc


@dataclass(frozen=True)
class HotSubgraph:
    vertices: FrozenSet[int]
    edges: FrozenSet[int]

    def items(self) -> FrozenSet[int]:
        return self.vertices | self.edges


def extract_hot_subgraph(state: HeatState, graph, theta) -> HotSubgraph:
    """Vertices with positive heat >= theta and the graph edges they induce."""
    vertices = frozenset(
        v for v, h in zip(state.nodes, state.heat) if h > 0 and h >= theta
    )
    edges = frozenset(
        e for e in graph.edge_ids
        if graph.endpoints[e][0] in vertices and graph.endpoints[e][1] in vertices
    )
    return HotSubgraph(vertices, edges)


def item_heat(heats: Mapping[int, float], graph, item_id) -> float:
    """Vertex heat, or the colder endpoint's heat for an edge."""
    item = graph.item(item_id)
    if item.is_vertex:
        return heats.get(item_id, 0.0)
    u, v = item.endpoints
    return min(heats.get(u, 0.0), heats.get(v, 0.0))


def quantile_threshold(values, q) -> float:
    values = np.asarray(list(values), dtype=float)
    if not values.size:
        return 0.0
    return float(np.quantile(values, q))


def heat_rows(state: HeatState) -> List[Tuple[int, int, float]]:
    return [(state.step, v, float(h)) for v, h in zip(state.nodes, state.heat)]
