"""
Small hand-built instances shared by the library tests.
"""
import tempfile
from pathlib import Path

from geolayer.costs import CostModel, CostParams, DemandMatrix
from geolayer.graph import Graph, Partitioning, Pattern
from geolayer.wan import DataCenter, LinkProfile, WanProfile

ALIBABA = dict(store_price=0.016, read_price=0.10, write_price=1.40)


def profile(rtts_ms, bandwidth_mbps=100.0, transfer_price=0.043, dcs=None):
    """Symmetric profile from ``{(a, b): rtt_ms}``; every DC at Alibaba prices."""
    names = dcs or sorted({dc for pair in rtts_ms for dc in pair})
    links = {}
    for (a, b), rtt in rtts_ms.items():
        link = LinkProfile(rtt / 1000, bandwidth_mbps * 10 ** 6, transfer_price)
        links[(a, b)] = link
        links[(b, a)] = link
    return WanProfile([DataCenter(name, name.lower(), **ALIBABA) for name in names], links)


def triangle():
    """Three DCs with 80, 150 and 225 ms links."""
    return profile({('A', 'B'): 80, ('A', 'C'): 225, ('B', 'C'): 150})


def path_graph(n, vertex_bytes=1000, edge_bytes=250):
    labels = [f"v{i}" for i in range(n)]
    return Graph(labels, [(i, i + 1) for i in range(n - 1)],
                 vertex_bytes=vertex_bytes, edge_bytes=edge_bytes)


def split(graph, dcs):
    """Partition consecutive vertex blocks over ``dcs``."""
    n = graph.vertex_count
    per = -(-n // len(dcs))
    return Partitioning(graph, {v: dcs[v // per] for v in graph.vertex_ids})


def write_files(directory, **files):
    paths = {}
    for name, text in files.items():
        path = Path(directory) / name
        path.write_text(text, encoding='utf-8')
        paths[name] = path
    return paths


class TempDirMixin:
    """Per-test temporary directory at ``self.tmp``."""

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.addCleanup(self._tmp.cleanup)


def small_instance(reads=None, writes=None, pattern_reads=None, params=None):
    """
    Six-vertex path over three DCs (A: v0 v1, B: v2 v3, C: v4 v5) with two
    patterns: p0 = v0-v1-v2 and p1 = v3-v4.
    """
    graph = path_graph(6)
    partitioning = split(graph, ['A', 'B', 'C'])
    e = {i: 6 + i for i in range(5)}
    patterns = {
        0: Pattern(0, (0, e[0], 1, e[1], 2), eta=1.0),
        1: Pattern(1, (3, e[3], 4), eta=1.0),
    }
    demand = DemandMatrix(reads or {}, writes or {}, pattern_reads or {})
    model = CostModel(graph.items, patterns, triangle(), params or CostParams())
    return graph, partitioning, patterns, demand, model
