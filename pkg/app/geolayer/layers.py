"""
Latency-aware layered graph.

Cross-partition edges are bucketed into layers by the RTT of the link they
cross. Walking the layers upward, the edges of each layer that join
previously separate components form bridge subgraphs; the components they
join form that bridge subgraph's cluster. Parent links between clusters and
their bridge subgraph give the hierarchy used by placement and routing.

Layer_0 units are data centers: the aggregated graph below layer 1 treats
each DC's vertex set as a single component.
"""
import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import networkx as nx

from .conf import get_setting
from .exceptions import NotCrossEdgeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyThresholds:
    """Cut points t_0 = 0 < t_1 < ... < t_{h-1}; t_h is implicitly infinite."""
    cuts: Tuple[float, ...]

    def __post_init__(self):
        if not self.cuts or self.cuts[0] != 0:
            raise ValueError('thresholds must start at 0')
        for a, b in zip(self.cuts, self.cuts[1:]):
            if not a < b:
                raise ValueError(f'thresholds must increase strictly ({a} >= {b})')
        if math.isinf(self.cuts[-1]):
            raise ValueError('the last finite threshold must be finite')

    @classmethod
    def fixed_interval(cls, interval_ms, layers) -> 'LatencyThresholds':
        return cls(tuple(i * interval_ms / 1000 for i in range(layers)))

    @classmethod
    def covering(cls, interval_ms, max_latency_s) -> 'LatencyThresholds':
        """Enough fixed-width buckets to hold ``max_latency_s`` below the open top layer."""
        layers = int(max_latency_s * 1000 // interval_ms) + 2
        return cls.fixed_interval(interval_ms, layers)

    @classmethod
    def from_settings(cls, max_latency_s) -> 'LatencyThresholds':
        return cls.covering(get_setting('LAYER_INTERVAL_MS'), max_latency_s)

    @property
    def h(self) -> int:
        return len(self.cuts)

    def bounds(self, k) -> Tuple[float, float]:
        upper = self.cuts[k] if k < self.h else math.inf
        return self.cuts[k - 1], upper


def layer_of_latency(requirement_s, thresholds: LatencyThresholds) -> int:
    """The layer k with requirement in [t_{k-1}, t_k)."""
    return max(1, bisect.bisect_right(thresholds.cuts, requirement_s))


def assign_latency(edge_id, graph, partitioning, wan) -> float:
    if not partitioning.is_cross(edge_id):
        raise NotCrossEdgeError(edge_id)
    u, v = graph.endpoints[edge_id]
    return wan.link(partitioning.dc_of(u), partitioning.dc_of(v)).rtt_s


@dataclass(frozen=True)
class LayerGraph:
    index: int
    edges: FrozenSet[int]
    vertices: FrozenSet[int]
    dc_pairs: FrozenSet[Tuple[str, str]]


@dataclass
class BridgeSubgraph:
    id: str
    layer: int
    edges: FrozenSet[int]
    vertices: FrozenSet[int]
    merged: Tuple[str, ...]
    dcs: FrozenSet[str]
    parent: Optional[str] = None
    attached_edges: Set[int] = field(default_factory=set)


@dataclass(frozen=True)
class Cluster:
    link: str
    members: Tuple[str, ...]


def build_layers(cross_edges, thresholds, wan, graph, partitioning) -> List[LayerGraph]:
    buckets: Dict[int, Set[int]] = {k: set() for k in range(1, thresholds.h + 1)}
    for edge_id in sorted(cross_edges):
        latency = assign_latency(edge_id, graph, partitioning, wan)
        buckets[layer_of_latency(latency, thresholds)].add(edge_id)

    layers = []
    for k in range(1, thresholds.h + 1):
        edges = buckets[k]
        vertices, pairs = set(), set()
        for edge_id in edges:
            u, v = graph.endpoints[edge_id]
            vertices.update((u, v))
            pairs.add(tuple(sorted((partitioning.dc_of(u), partitioning.dc_of(v)))))
        layers.append(LayerGraph(k, frozenset(edges), frozenset(vertices), frozenset(pairs)))
    return layers


def bridge_subgraph_id(layer, edges) -> str:
    return f"BS{layer}.{min(edges)}"


def build_bridge_subgraphs(layers, graph, partitioning):
    """
    Returns ``(bridge_subgraphs, clusters, parent)`` keyed by node id. DC ids
    are the leaves; a component of the aggregated graph is represented by
    the topmost node that formed it.
    """
    representative: Dict[str, str] = {dc: dc for dc in partitioning.dcs}
    members_of: Dict[str, FrozenSet[str]] = {dc: frozenset([dc]) for dc in partitioning.dcs}
    bridge_subgraphs: Dict[str, BridgeSubgraph] = {}
    clusters: Dict[str, Cluster] = {}
    parent: Dict[str, str] = {}
    attached: Dict[str, Set[int]] = {}

    for layer in layers:
        contracted = nx.MultiGraph()
        for edge_id in sorted(layer.edges):
            u, v = graph.endpoints[edge_id]
            a = representative[partitioning.dc_of(u)]
            b = representative[partitioning.dc_of(v)]
            contracted.add_edge(a, b, key=edge_id)

        groups = sorted(
            (sorted(component) for component in nx.connected_components(contracted)),
            key=lambda nodes: nodes[0],
        )
        for nodes in groups:
            edges = frozenset(
                key for _, _, key in contracted.subgraph(nodes).edges(keys=True)
            )
            if len(nodes) == 1:
                attached.setdefault(nodes[0], set()).update(edges)
                continue
            bs_id = bridge_subgraph_id(layer.index, edges)
            vertices = frozenset(w for e in edges for w in graph.endpoints[e])
            dcs = frozenset().union(*(members_of[n] for n in nodes))
            bridge_subgraphs[bs_id] = BridgeSubgraph(
                bs_id, layer.index, edges, vertices, tuple(nodes), dcs,
            )
            clusters[bs_id] = Cluster(bs_id, tuple(nodes))
            for node in nodes:
                parent[node] = bs_id
                if node in bridge_subgraphs:
                    bridge_subgraphs[node].parent = bs_id
            members_of[bs_id] = dcs
            for dc in dcs:
                representative[dc] = bs_id
        logger.debug("Layer %d: %d edges, %d bridge subgraphs so far",
                     layer.index, len(layer.edges), len(bridge_subgraphs))

    for node, edges in attached.items():
        if node in bridge_subgraphs:
            bridge_subgraphs[node].attached_edges.update(edges)
    return bridge_subgraphs, clusters, parent


class LayeredGraph:
    """Layers, bridge subgraphs, clusters and the hierarchy over DCs."""

    def __init__(self, graph, partitioning, wan, thresholds: LatencyThresholds):
        self.graph = graph
        self.partitioning = partitioning
        self.wan = wan
        self.thresholds = thresholds
        self.dcs: Tuple[str, ...] = tuple(wan.dc_ids) if wan else partitioning.dcs
        self.layers = build_layers(partitioning.cross_edges, thresholds, wan, graph, partitioning)
        self.bridge_subgraphs, self.clusters, self.parent = build_bridge_subgraphs(
            self.layers, graph, partitioning,
        )
        self._children: Dict[str, List[str]] = {}
        for child, bs_id in self.parent.items():
            self._children.setdefault(bs_id, []).append(child)
        for children in self._children.values():
            children.sort()
        logger.info(
            "Built %d layers with %d bridge subgraphs and %d roots",
            len(self.layers), len(self.bridge_subgraphs), len(self.roots()),
        )

    @classmethod
    def build(cls, graph, partitioning, wan, interval_ms=None) -> 'LayeredGraph':
        interval_ms = interval_ms or get_setting('LAYER_INTERVAL_MS')
        max_rtt = max((link.rtt_s for link in wan.links.values()), default=0.0)
        return cls(graph, partitioning, wan, LatencyThresholds.covering(interval_ms, max_rtt))

    @property
    def h(self) -> int:
        return self.thresholds.h

    def layer(self, k) -> LayerGraph:
        return self.layers[k - 1]

    def is_dc(self, node) -> bool:
        return node not in self.bridge_subgraphs

    def layer_of(self, node) -> int:
        return 0 if self.is_dc(node) else self.bridge_subgraphs[node].layer

    def children(self, node) -> List[str]:
        return self._children.get(node, [])

    def dcs_under(self, node) -> FrozenSet[str]:
        if self.is_dc(node):
            return frozenset([node])
        return self.bridge_subgraphs[node].dcs

    def ancestors(self, dc) -> List[str]:
        """Bridge subgraphs above ``dc``, lowest layer first."""
        chain = []
        node = dc
        while node in self.parent:
            node = self.parent[node]
            chain.append(node)
        return chain

    def root_of(self, node) -> str:
        while node in self.parent:
            node = self.parent[node]
        return node

    def roots(self) -> List[str]:
        nodes = list(self.dcs) + list(self.bridge_subgraphs)
        return sorted(n for n in nodes if n not in self.parent)

    def anchor(self, dc, max_layer) -> str:
        """Topmost node containing ``dc`` whose layer is at most ``max_layer``."""
        node = dc
        for bs_id in self.ancestors(dc):
            if self.layer_of(bs_id) > max_layer:
                break
            node = bs_id
        return node

    def components_after(self, k) -> Set[FrozenSet[str]]:
        """DC sets of the aggregated graph's components once layers 1..k are added."""
        components = {dc: frozenset([dc]) for dc in self.partitioning.dcs}
        for bs in sorted(self.bridge_subgraphs.values(), key=lambda b: (b.layer, b.id)):
            if bs.layer > k:
                continue
            for dc in bs.dcs:
                components[dc] = bs.dcs
        return set(components.values())

    def mean_latency(self, k) -> float:
        pairs = self.layer(k).dc_pairs
        if not pairs:
            return self.thresholds.bounds(k)[0]
        return self.wan.mean_rtt(pairs)

    def top_layer(self) -> int:
        non_empty = [layer.index for layer in self.layers if layer.edges]
        return max(non_empty) if non_empty else 1

    def eta(self, k) -> float:
        """Mean latency of layer k relative to the top non-empty layer, in (0, 1]."""
        top = self.mean_latency(self.top_layer())
        if top <= 0:
            return 1.0
        return min(1.0, max(1e-9, self.mean_latency(k) / top))

    def dump(self) -> str:
        cuts = ' '.join(f"{t * 1000:g}" for t in self.thresholds.cuts)
        lines = [f"thresholds_ms {cuts} inf"]
        for layer in self.layers:
            lines.append(f"layer {layer.index} edges {len(layer.edges)}")
            for edge_id in sorted(layer.edges):
                u, v = self.graph.endpoints[edge_id]
                lines.append(
                    f"  {edge_id} {u}@{self.partitioning.dc_of(u)} -- {v}@{self.partitioning.dc_of(v)}"
                )
            for bs in sorted(self.bridge_subgraphs.values(), key=lambda b: b.id):
                if bs.layer == layer.index:
                    lines.append(
                        f"  {bs.id} members={','.join(bs.merged)} edges={','.join(map(str, sorted(bs.edges)))}"
                    )
        lines.append('hierarchy')
        for child in sorted(self.parent):
            lines.append(f"  {child} -> {self.parent[child]}")
        return '\n'.join(lines) + '\n'
