"""
Graph data model: vertices and edges as data items, geo-partitioning,
boundary extraction and request patterns.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import networkx as nx

from .exceptions import (
    DisconnectedGraphError,
    GraphParseError,
    UnassignedVertexError,
    UnknownItemError,
)

logger = logging.getLogger(__name__)

VERTEX = 'vertex'
EDGE = 'edge'

DEFAULT_VERTEX_BYTES = 1000
DEFAULT_EDGE_BYTES = 250


@dataclass(frozen=True)
class DataItem:
    id: int
    kind: str
    size_bytes: int
    endpoints: Optional[Tuple[int, int]] = None

    @property
    def is_vertex(self):
        return self.kind == VERTEX

    @property
    def is_edge(self):
        return self.kind == EDGE


class Graph:
    """
    Undirected graph whose vertices and edges are both data items.

    Vertex ids are dense integers ``0..n-1`` in first-appearance order, edge
    ids continue at ``n`` in file order. ``weights`` holds A_uv per edge id.
    """

    def __init__(self, labels, edges, weights=None, directed=(),
                 vertex_bytes=DEFAULT_VERTEX_BYTES, edge_bytes=DEFAULT_EDGE_BYTES):
        self.labels: Tuple[str, ...] = tuple(str(label) for label in labels)
        n = len(self.labels)
        self.items: Dict[int, DataItem] = {}
        for v in range(n):
            self.items[v] = DataItem(v, VERTEX, vertex_bytes)
        self.edge_ids: Tuple[int, ...] = tuple(range(n, n + len(edges)))
        self.endpoints: Dict[int, Tuple[int, int]] = {}
        for edge_id, (u, v) in zip(self.edge_ids, edges):
            if not (0 <= u < n and 0 <= v < n):
                raise UnknownItemError(max(u, v))
            self.endpoints[edge_id] = (u, v)
            self.items[edge_id] = DataItem(edge_id, EDGE, edge_bytes, (u, v))
        self.weights: Dict[int, float] = {
            edge_id: 1.0 for edge_id in self.edge_ids
        }
        if weights:
            for edge_id, weight in weights.items():
                self.weights[edge_id] = float(weight)
        self.directed: FrozenSet[int] = frozenset(directed)

        self._adjacency: Dict[int, List[Tuple[int, int]]] = {v: [] for v in range(n)}
        for edge_id in self.edge_ids:
            u, v = self.endpoints[edge_id]
            self._adjacency[u].append((v, edge_id))
            if u != v:
                self._adjacency[v].append((u, edge_id))
        self._label_index = {label: v for v, label in enumerate(self.labels)}

    def __repr__(self):
        return f"<Graph |V|={self.vertex_count} |E|={len(self.edge_ids)}>"

    @property
    def vertex_count(self):
        return len(self.labels)

    @property
    def vertex_ids(self):
        return range(len(self.labels))

    def item(self, item_id) -> DataItem:
        try:
            return self.items[item_id]
        except KeyError:
            raise UnknownItemError(item_id) from None

    def vertex_of(self, label) -> int:
        return self._label_index[str(label)]

    def neighbors(self, v) -> List[Tuple[int, int]]:
        """``(neighbor, edge_id)`` pairs of vertex ``v``."""
        return self._adjacency[v]

    def edge_between(self, u, v) -> Optional[int]:
        for w, edge_id in self._adjacency[u]:
            if w == v:
                return edge_id
        return None

    def weight(self, edge_id) -> float:
        return self.weights[edge_id]

    def vertices_of(self, item_ids: Iterable[int]) -> FrozenSet[int]:
        """Vertices touched by a set of items (edges contribute endpoints)."""
        found = set()
        for item_id in item_ids:
            item = self.item(item_id)
            if item.is_vertex:
                found.add(item_id)
            else:
                found.update(item.endpoints)
        return frozenset(found)

    def with_weights(self, weights: Mapping[int, float]) -> 'Graph':
        clone = Graph.__new__(Graph)
        clone.__dict__.update(self.__dict__)
        clone.weights = dict(self.weights)
        clone.weights.update({k: float(w) for k, w in weights.items()})
        return clone

    def to_networkx(self, vertices=None) -> nx.Graph:
        """Simple undirected graph; parallel edges merge with summed weight."""
        keep = set(self.vertex_ids) if vertices is None else set(vertices)
        g = nx.Graph()
        g.add_nodes_from(sorted(keep))
        for edge_id in self.edge_ids:
            u, v = self.endpoints[edge_id]
            if u == v or u not in keep or v not in keep:
                continue
            if g.has_edge(u, v):
                g[u][v]['weight'] += self.weights[edge_id]
            else:
                g.add_edge(u, v, weight=self.weights[edge_id])
        return g


class Partitioning:
    """Assignment of every vertex to a DC plus the derived per-DC sets."""

    def __init__(self, graph: Graph, assignment: Mapping[int, str]):
        for v in graph.vertex_ids:
            if v not in assignment:
                raise UnassignedVertexError(graph.labels[v])
        self.graph = graph
        self.assignment: Dict[int, str] = {v: str(assignment[v]) for v in graph.vertex_ids}
        self.dcs: Tuple[str, ...] = tuple(sorted(set(self.assignment.values())))

        vertex_sets = {dc: set() for dc in self.dcs}
        for v, dc in self.assignment.items():
            vertex_sets[dc].add(v)
        self.vertex_sets: Dict[str, FrozenSet[int]] = {
            dc: frozenset(vs) for dc, vs in vertex_sets.items()
        }
        edge_sets = {dc: set() for dc in self.dcs}
        for edge_id in graph.edge_ids:
            u, v = graph.endpoints[edge_id]
            if self.assignment[u] == self.assignment[v]:
                edge_sets[self.assignment[u]].add(edge_id)
        self.edge_sets: Dict[str, FrozenSet[int]] = {
            dc: frozenset(es) for dc, es in edge_sets.items()
        }
        self.boundary, self.cross_edges = extract_boundary(graph, self)

    def dc_of(self, vertex) -> str:
        return self.assignment[vertex]

    def is_cross(self, edge_id) -> bool:
        return edge_id in self.cross_edges

    def home_of(self, item_id) -> str:
        """
        Home DC of an item. Edges live with their endpoints' DC; a cross edge
        is homed at the DC of its smaller endpoint id.
        """
        item = self.graph.item(item_id)
        if item.is_vertex:
            return self.assignment[item_id]
        u, v = item.endpoints
        return self.assignment[min(u, v)]

    def homes(self) -> Dict[int, str]:
        return {item_id: self.home_of(item_id) for item_id in self.graph.items}


def extract_boundary(graph: Graph, partitioning) -> Tuple[Dict[str, FrozenSet[int]], FrozenSet[int]]:
    """Boundary vertex sets B_d and the cross-partition edge set E^B."""
    assignment = partitioning.assignment
    boundary = {dc: set() for dc in sorted(set(assignment.values()))}
    cross = set()
    for edge_id in graph.edge_ids:
        u, v = graph.endpoints[edge_id]
        du, dv = assignment[u], assignment[v]
        if du != dv:
            cross.add(edge_id)
            boundary[du].add(u)
            boundary[dv].add(v)
    return {dc: frozenset(vs) for dc, vs in boundary.items()}, frozenset(cross)


@dataclass(frozen=True)
class Pattern:
    """
    Request pattern: the items matched by one query, its latency factor
    ``eta`` (requirement = eta * gamma_max) and per-origin read rates.
    """
    id: int
    items: Tuple[int, ...]
    eta: float = 1.0
    origin_rates: Dict[str, float] = field(default_factory=dict, compare=False, hash=False)

    def requirement(self, gamma_max) -> float:
        return self.eta * gamma_max

    def size_bytes(self, graph: Graph) -> int:
        return sum(graph.item(x).size_bytes for x in self.items)


@dataclass(frozen=True)
class PatternReport:
    ok: bool
    violation: Optional[str] = None


def validate_pattern(pattern: Pattern, graph: Graph) -> PatternReport:
    """Check that a pattern's items form connected path bindings."""
    if not pattern.items:
        return PatternReport(False, 'pattern has no items')
    if not 0 < pattern.eta <= 1:
        return PatternReport(False, f'eta {pattern.eta} outside (0, 1]')
    item_set = set(pattern.items)
    for x in pattern.items:
        item = graph.items.get(x)
        if item is None:
            return PatternReport(False, f'item {x} does not exist')
        if item.size_bytes <= 0:
            return PatternReport(False, f'item {x} has no size')
        if item.is_edge:
            missing = [v for v in item.endpoints if v not in item_set]
            if missing:
                return PatternReport(False, f'edge {x} endpoint {missing[0]} not in pattern')

    bound = nx.Graph()
    bound.add_nodes_from(x for x in pattern.items if graph.items[x].is_vertex)
    for x in pattern.items:
        item = graph.items[x]
        if item.is_edge:
            bound.add_edge(*item.endpoints)
    if nx.number_connected_components(bound) > 1:
        parts = sorted(min(c) for c in nx.connected_components(bound))
        return PatternReport(False, f'vertices {parts[0]} and {parts[1]} are not joined by pattern edges')
    return PatternReport(True)


def conductivity_from_reads(graph: Graph, edge_reads: Mapping[int, float]) -> Graph:
    """
    Heat conductivity A_uv from historical edge reads, normalized by the mean
    positive read count, floored at 1.0 for edges never read.
    """
    counts = [float(edge_reads.get(e, 0.0)) for e in graph.edge_ids]
    positive = [c for c in counts if c > 0]
    if not positive:
        return graph.with_weights({e: 1.0 for e in graph.edge_ids})
    mean = sum(positive) / len(positive)
    weights = {e: max(1.0, c / mean) for e, c in zip(graph.edge_ids, counts)}
    return graph.with_weights(weights)


def _parse_lines(path):
    with open(path, encoding='utf-8') as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split('#', 1)[0].strip()
            if line:
                yield line_no, line, raw.rstrip('\n')


def load_graph(edge_list_file, partition_file,
               vertex_bytes=DEFAULT_VERTEX_BYTES,
               edge_bytes=DEFAULT_EDGE_BYTES) -> Tuple[Graph, Partitioning]:
    """
    Load an edge list (``u v [weight] [directed]`` per line) and a partition
    file (``vertex dc`` per line).
    """
    edge_list_file = Path(edge_list_file)
    partition_file = Path(partition_file)

    labels: List[str] = []
    index: Dict[str, int] = {}

    def vertex(label):
        if label not in index:
            index[label] = len(labels)
            labels.append(label)
        return index[label]

    edges, weights, directed = [], {}, []
    for line_no, line, raw in _parse_lines(edge_list_file):
        parts = line.split()
        if len(parts) < 2 or len(parts) > 4:
            raise GraphParseError(edge_list_file, line_no, raw)
        pos = len(edges)
        edges.append((vertex(parts[0]), vertex(parts[1])))
        for token in parts[2:]:
            if token == 'directed':
                directed.append(pos)
                continue
            try:
                weight = float(token)
            except ValueError:
                raise GraphParseError(edge_list_file, line_no, raw) from None
            if weight < 0:
                raise GraphParseError(edge_list_file, line_no, raw)
            weights[pos] = weight

    assignment_by_label: Dict[str, str] = {}
    for line_no, line, raw in _parse_lines(partition_file):
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(partition_file, line_no, raw)
        assignment_by_label[parts[0]] = parts[1]
        vertex(parts[0])

    for label in labels:
        if label not in assignment_by_label:
            raise UnassignedVertexError(label)

    n = len(labels)
    graph = Graph(
        labels, edges,
        weights={n + pos: w for pos, w in weights.items()},
        directed=[n + pos for pos in directed],
        vertex_bytes=vertex_bytes,
        edge_bytes=edge_bytes,
    )
    components = nx.number_connected_components(graph.to_networkx())
    if components != 1:
        raise DisconnectedGraphError(components)

    partitioning = Partitioning(graph, {index[label]: dc for label, dc in assignment_by_label.items()})
    logger.info(
        "Loaded graph %s: %d vertices, %d edges, %d DCs, %d cross edges",
        edge_list_file.name, graph.vertex_count, len(graph.edge_ids),
        len(partitioning.dcs), len(partitioning.cross_edges),
    )
    return graph, partitioning
