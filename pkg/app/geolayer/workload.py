"""
Synthetic workloads: k-hop random-walk patterns from Zipf-skewed sources,
origin-skewed read requests, item writes, and their aggregation into
demand matrices. Traces round-trip through a line-oriented CSV file.
"""
import csv
import logging
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .costs import DemandMatrix
from .graph import Graph, Partitioning, Pattern

logger = logging.getLogger(__name__)

READ = 'read-pattern'
WRITE = 'write-item'

TRACE_HEADER = ('seq', 'origin_dc', 'op', 'object_id', 'req_latency_ms')

# named sub-streams of the scenario seed
STREAMS = {
    'graph': 1,
    'sources': 2,
    'walks': 3,
    'requirements': 4,
    'requests': 5,
    'writes': 6,
    'baselines': 7,
    'routes': 8,
    'offline': 9,
}


def stream(seed, name) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name]])


def zipf_weights(n, exponent) -> np.ndarray:
    """Probabilities proportional to 1 / rank^exponent over ``n`` ranks."""
    if n <= 0:
        return np.zeros(0)
    weights = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    return weights / weights.sum()


@dataclass(frozen=True)
class WorkloadSpec:
    patterns: int = 50
    hops: int = 3
    source_skew: float = 1.0
    pattern_skew: float = 1.0
    origin_locality: float = 0.7
    write_item_fraction: float = 0.3
    write_request_fraction: float = 0.1
    requests: int = 10000
    window_requests: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ('origin_locality', 'write_item_fraction', 'write_request_fraction'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.hops < 1:
            raise ValueError(f"hops must be >= 1, got {self.hops}")
        if self.patterns < 1:
            raise ValueError(f"patterns must be >= 1, got {self.patterns}")
        if self.window_requests < 1:
            raise ValueError(f"window_requests must be >= 1, got {self.window_requests}")

    def window_count(self, trace_length) -> int:
        """Aggregation windows spanned by a trace of ``trace_length`` records."""
        return max(1, -(-trace_length // self.window_requests))


@dataclass(frozen=True)
class TraceRecord:
    seq: int
    origin: str
    op: str
    object_id: int
    requirement_s: Optional[float] = None

    @property
    def timestamp(self) -> int:
        return self.seq

    def as_row(self) -> List[str]:
        latency = '' if self.requirement_s is None else _millis(self.requirement_s)
        return [str(self.seq), self.origin, self.op, str(self.object_id), latency]


def _millis(seconds) -> str:
    return format(Decimal(repr(float(seconds))).scaleb(3).normalize(), 'f')


def synthetic_graph(vertices, dcs: Sequence[str], degree=4, seed=0,
                    cross_per_pair=2) -> Tuple[Graph, Partitioning]:
    """
    Connected graph with a connected local subgraph per DC and
    ``cross_per_pair`` random cross edges between every pair of DCs.
    """
    rng = stream(seed, 'graph')
    dcs = list(dcs)
    sizes = [vertices // len(dcs) + (1 if i < vertices % len(dcs) else 0) for i in range(len(dcs))]
    labels, assignment, edges = [], {}, []
    offset = 0
    members: Dict[str, List[int]] = {}
    for dc, size in zip(dcs, sizes):
        k = min(degree, size - 1)
        if k >= 2 and size > 2:
            local = nx.connected_watts_strogatz_graph(size, k, 0.1, seed=int(rng.integers(2 ** 31)))
        else:
            local = nx.path_graph(size)
        ids = list(range(offset, offset + size))
        for v in ids:
            labels.append(f"v{v}")
            assignment[v] = dc
        edges.extend(sorted((offset + u, offset + v) for u, v in local.edges()))
        members[dc] = ids
        offset += size
    for i, a in enumerate(dcs):
        for b in dcs[i + 1:]:
            for _ in range(cross_per_pair):
                u = int(rng.choice(members[a]))
                v = int(rng.choice(members[b]))
                edges.append((u, v))
    graph = Graph(labels, edges)
    return graph, Partitioning(graph, assignment)


def _walk(graph, source, hops, rng) -> Tuple[List[int], List[int]]:
    """Non-backtracking walk without revisits; stops early at a dead end."""
    path, edges = [source], []
    visited = {source}
    current = source
    for _ in range(hops):
        options = [(w, e) for w, e in graph.neighbors(current) if w not in visited]
        if not options:
            break
        w, e = options[int(rng.integers(len(options)))]
        path.append(w)
        edges.append(e)
        visited.add(w)
        current = w
    return path, edges


def _origin(home, dcs, locality, rng) -> str:
    if rng.random() < locality:
        return home
    return dcs[int(rng.integers(len(dcs)))]


def requirement_for(layer, thresholds) -> float:
    """Midpoint of a layer's latency interval; the open top layer gets a half-interval margin."""
    lower, upper = thresholds.bounds(layer)
    if np.isinf(upper):
        step = thresholds.cuts[1] if thresholds.h > 1 else 0.1
        return lower + step / 2
    return (lower + upper) / 2


def pattern_sources(spec: WorkloadSpec, graph) -> Dict[int, int]:
    """Walk start vertex of every pattern, drawn Zipf-skewed over a seeded vertex ranking."""
    rng = stream(spec.seed, 'sources')
    ranking = rng.permutation(graph.vertex_count)
    weights = zipf_weights(graph.vertex_count, spec.source_skew)
    return {
        p: int(ranking[rng.choice(graph.vertex_count, p=weights)]) for p in range(spec.patterns)
    }


def generate(spec: WorkloadSpec, graph, partitioning, thresholds,
             gamma_max) -> Tuple[Dict[int, Pattern], List[TraceRecord]]:
    """Patterns from k-hop walks and a read/write trace, deterministic in ``spec.seed``."""
    dcs = list(partitioning.dcs)
    walks_rng = stream(spec.seed, 'walks')
    requirements_rng = stream(spec.seed, 'requirements')

    patterns: Dict[int, Pattern] = {}
    sources = pattern_sources(spec, graph)
    for p in range(spec.patterns):
        source = sources[p]
        path, edges = _walk(graph, source, spec.hops, walks_rng)
        layer = int(requirements_rng.integers(1, thresholds.h + 1))
        requirement = requirement_for(layer, thresholds)
        eta = min(1.0, requirement / gamma_max)
        patterns[p] = Pattern(p, tuple(sorted(path + edges)), eta)

    requests_rng = stream(spec.seed, 'requests')
    writes_rng = stream(spec.seed, 'writes')
    all_items = sorted(graph.items)
    writable_count = int(round(spec.write_item_fraction * len(all_items)))
    writable = sorted(int(x) for x in writes_rng.choice(all_items, size=writable_count, replace=False))
    pattern_order = requests_rng.permutation(spec.patterns)
    pattern_weights = zipf_weights(spec.patterns, spec.pattern_skew)

    trace: List[TraceRecord] = []
    for seq in range(spec.requests):
        if writable and requests_rng.random() < spec.write_request_fraction:
            x = writable[int(writes_rng.integers(len(writable)))]
            origin = _origin(partitioning.home_of(x), dcs, spec.origin_locality, writes_rng)
            trace.append(TraceRecord(seq, origin, WRITE, x))
            continue
        p = int(pattern_order[requests_rng.choice(spec.patterns, p=pattern_weights)])
        home = partitioning.dc_of(sources[p])
        origin = _origin(home, dcs, spec.origin_locality, requests_rng)
        trace.append(TraceRecord(seq, origin, READ, p, patterns[p].requirement(gamma_max)))

    logger.info("Generated %d patterns and %d trace records (seed %s)",
                len(patterns), len(trace), spec.seed)
    return patterns, trace


def aggregate(trace: Iterable[TraceRecord], patterns, window: Tuple[int, int] = None,
              window_count=1) -> DemandMatrix:
    """
    Counts per (item, origin) and (pattern, origin) over ``[start, end)`` of
    logical time, as mean rates per window when the records span
    ``window_count`` windows.
    """
    reads: Dict[Tuple[int, str], float] = {}
    writes: Dict[Tuple[int, str], float] = {}
    pattern_reads: Dict[Tuple[int, str], float] = {}
    for record in trace:
        if window is not None and not window[0] <= record.timestamp < window[1]:
            continue
        if record.op == READ:
            key = (record.object_id, record.origin)
            pattern_reads[key] = pattern_reads.get(key, 0) + 1
            for x in patterns[record.object_id].items:
                reads[(x, record.origin)] = reads.get((x, record.origin), 0) + 1
        else:
            key = (record.object_id, record.origin)
            writes[key] = writes.get(key, 0) + 1
    return DemandMatrix(reads, writes, pattern_reads).per_window(window_count)


def access_by_hop(trace: Iterable[TraceRecord], patterns, sources: Mapping[int, int],
                  graph) -> Dict[int, Dict[int, int]]:
    """
    Read accesses per vertex, split by the vertex's hop distance from the
    source of the pattern that reached it: ``{hop: {vertex: count}}``.
    """
    distances: Dict[int, Dict[int, int]] = {}
    for p, pattern in patterns.items():
        walked = nx.Graph()
        walked.add_nodes_from(x for x in pattern.items if graph.item(x).is_vertex)
        walked.add_edges_from(graph.item(x).endpoints for x in pattern.items if graph.item(x).is_edge)
        distances[p] = nx.single_source_shortest_path_length(walked, sources[p])

    counts: Dict[int, Dict[int, int]] = {}
    for record in trace:
        if record.op != READ:
            continue
        for v, hop in distances[record.object_id].items():
            per_hop = counts.setdefault(hop, {})
            per_hop[v] = per_hop.get(v, 0) + 1
    return dict(sorted(counts.items()))


def hop_medians(counts: Mapping[int, Mapping[int, int]]) -> Dict[int, float]:
    return {hop: float(np.median(list(per_vertex.values()))) for hop, per_vertex in counts.items()}


def windows(trace_length, count) -> List[Tuple[int, int]]:
    size = max(1, -(-trace_length // count))
    return [(start, min(start + size, trace_length)) for start in range(0, trace_length, size)]


def write_trace(trace: Iterable[TraceRecord], path):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for record in trace:
            writer.writerow(record.as_row())


def read_trace(path) -> List[TraceRecord]:
    trace = []
    with open(Path(path), newline='', encoding='utf-8') as fh:
        for row in csv.DictReader(fh):
            latency = row['req_latency_ms']
            trace.append(TraceRecord(
                int(row['seq']), row['origin_dc'], row['op'], int(row['object_id']),
                float(Decimal(latency).scaleb(-3)) if latency else None,
            ))
    return trace


__all__ = [
    'READ', 'WRITE', 'TraceRecord', 'WorkloadSpec', 'access_by_hop',
    'aggregate', 'generate', 'hop_medians', 'pattern_sources', 'read_trace', 'stream',
    'synthetic_graph', 'windows', 'write_trace', 'zipf_weights',
]
