"""
Tests for workload generation and aggregation.
"""
import numpy as np
from django.test import SimpleTestCase

from geolayer.graph import validate_pattern
from geolayer.layers import LatencyThresholds
from geolayer.workload import (
    READ,
    WRITE,
    TraceRecord,
    WorkloadSpec,
    access_by_hop,
    aggregate,
    generate,
    hop_medians,
    pattern_sources,
    read_trace,
    requirement_for,
    synthetic_graph,
    windows,
    write_trace,
    zipf_weights,
)

from .fixtures import TempDirMixin

DCS = ['A', 'B', 'C']
THRESHOLDS = LatencyThresholds.fixed_interval(100, 4)


def workload(**overrides):
    graph, parts = synthetic_graph(120, DCS, degree=4, seed=11)
    spec = WorkloadSpec(**{'patterns': 40, 'requests': 2000, 'seed': 11, **overrides})
    patterns, trace = generate(spec, graph, parts, THRESHOLDS, 0.3)
    return graph, parts, spec, patterns, trace


class SyntheticGraphTests(SimpleTestCase):
    """Test the synthetic multi-DC graph."""

    def test_every_dc_pair_is_linked(self):
        """Test each DC pair gets its cross edges and every vertex is assigned."""
        graph, parts = synthetic_graph(60, DCS, degree=4, seed=1, cross_per_pair=2)
        self.assertEqual(len(parts.cross_edges), 6)
        self.assertEqual(sum(len(vs) for vs in parts.vertex_sets.values()), 60)

    def test_seeded(self):
        """Test the same seed rebuilds the same graph."""
        a, _ = synthetic_graph(30, DCS, seed=5)
        b, _ = synthetic_graph(30, DCS, seed=5)
        self.assertEqual(a.endpoints, b.endpoints)


class GenerateTests(SimpleTestCase):
    """Test pattern and trace generation."""

    def test_walk_length_bound(self):
        """Test a 3-hop walk yields at most four vertices and three edges."""
        graph, _, _, patterns, _ = workload()
        for pattern in patterns.values():
            vertices = [x for x in pattern.items if graph.item(x).is_vertex]
            edges = [x for x in pattern.items if graph.item(x).is_edge]
            self.assertLessEqual(len(vertices), 4)
            self.assertLessEqual(len(edges), 3)
            self.assertEqual(len(edges), len(vertices) - 1)
            self.assertTrue(validate_pattern(pattern, graph).ok)

    def test_requirements_snap_to_layer_intervals(self):
        """Test every requirement is a layer midpoint capped by gamma_max."""
        _, _, _, patterns, _ = workload()
        allowed = {min(requirement_for(k, THRESHOLDS), 0.3) for k in range(1, THRESHOLDS.h + 1)}
        for pattern in patterns.values():
            self.assertTrue(
                any(abs(pattern.requirement(0.3) - r) < 1e-12 for r in allowed),
                pattern.requirement(0.3),
            )

    def test_trace_shape(self):
        """Test the trace is numbered in order and mixes reads with writes."""
        _, _, _, patterns, trace = workload()
        self.assertEqual([r.seq for r in trace], list(range(2000)))
        ops = {r.op for r in trace}
        self.assertEqual(ops, {READ, WRITE})
        for record in trace:
            if record.op == READ:
                self.assertIn(record.object_id, patterns)
                self.assertIsNotNone(record.requirement_s)

    def test_deterministic(self):
        """Test a fixed seed gives a byte-identical trace file."""
        _, _, _, patterns_a, trace_a = workload()
        _, _, _, patterns_b, trace_b = workload()
        self.assertEqual(patterns_a, patterns_b)
        self.assertEqual(trace_a, trace_b)

    def test_zero_skew_is_uniform(self):
        """Test origins spread uniformly over DCs when nothing is local."""
        self.assertTrue(np.allclose(zipf_weights(5, 0), 0.2))
        _, _, _, _, trace = workload(
            requests=10000, origin_locality=0.0, write_request_fraction=0.0,
        )
        counts = np.array([sum(1 for r in trace if r.origin == d) for d in DCS])
        expected = len(trace) / len(DCS)
        chi_square = float(((counts - expected) ** 2 / expected).sum())
        # 99.9th percentile of chi-square with two degrees of freedom
        self.assertLess(chi_square, 13.82)

    def test_invalid_spec(self):
        """Test out-of-range fractions and hop counts are rejected."""
        with self.assertRaises(ValueError):
            WorkloadSpec(write_item_fraction=1.5)
        with self.assertRaises(ValueError):
            WorkloadSpec(hops=0)

    def test_access_declines_with_hop_distance(self):
        """Test median access frequency at the sources is at least that three hops out."""
        graph, _, spec, patterns, trace = workload(
            patterns=50, requests=10000, write_request_fraction=0.0,
        )
        sources = pattern_sources(spec, graph)
        medians = hop_medians(access_by_hop(trace, patterns, sources, graph))
        self.assertGreaterEqual(medians[0], medians[3])


class AggregateTests(SimpleTestCase):
    """Test demand aggregation."""

    def setUp(self):
        _, _, _, self.patterns, self.trace = workload()

    def test_empty_trace(self):
        """Test no records give empty matrices."""
        demand = aggregate([], self.patterns)
        self.assertTrue(demand.is_empty())

    def test_pattern_read_twice(self):
        """Test two reads of a pattern count twice for it and each item."""
        trace = [TraceRecord(0, 'B', READ, 3, 0.1), TraceRecord(1, 'B', READ, 3, 0.1)]
        demand = aggregate(trace, self.patterns)
        self.assertEqual(demand.pattern_reads, {(3, 'B'): 2})
        self.assertEqual(demand.reads, {(x, 'B'): 2 for x in self.patterns[3].items})

    def test_matches_naive_count(self):
        """Test aggregation agrees with an independent counting pass."""
        demand = aggregate(self.trace, self.patterns)
        reads, writes = {}, {}
        for record in self.trace:
            if record.op == WRITE:
                key = (record.object_id, record.origin)
                writes[key] = writes.get(key, 0) + 1
                continue
            for x in self.patterns[record.object_id].items:
                reads[(x, record.origin)] = reads.get((x, record.origin), 0) + 1
        self.assertEqual(demand.reads, reads)
        self.assertEqual(demand.writes, writes)

    def test_linear_over_concatenation(self):
        """Test aggregating a split trace and summing equals aggregating it whole."""
        first, second = self.trace[:700], self.trace[700:]
        whole = aggregate(self.trace, self.patterns)
        summed = aggregate(first, self.patterns) + aggregate(second, self.patterns)
        self.assertEqual(whole.reads, summed.reads)
        self.assertEqual(whole.writes, summed.writes)
        self.assertEqual(whole.pattern_reads, summed.pattern_reads)

    def test_window(self):
        """Test a window only counts records inside it."""
        demand = aggregate(self.trace, self.patterns, window=(0, 10))
        self.assertEqual(
            sum(demand.pattern_reads.values()) + sum(demand.writes.values()), 10,
        )

    def test_per_window_rates(self):
        """Test counts over ten windows become mean rates per window."""
        trace = [TraceRecord(i, 'B', READ, 3, 0.1) for i in range(20)]
        demand = aggregate(trace, self.patterns, window_count=10)
        self.assertEqual(demand.pattern_reads, {(3, 'B'): 2.0})
        self.assertEqual(demand.reads, {(x, 'B'): 2.0 for x in self.patterns[3].items})

    def test_windows_cover_trace(self):
        """Test windows tile the logical timeline."""
        self.assertEqual(windows(10, 3), [(0, 4), (4, 8), (8, 10)])


class TraceFileTests(TempDirMixin, SimpleTestCase):
    """Test trace CSV files."""

    def test_written_trace_reads_back(self):
        """Test a trace file reproduces the records and is byte-stable."""
        _, _, _, _, trace = workload(requests=200)
        write_trace(trace, self.tmp / 'a.csv')
        write_trace(read_trace(self.tmp / 'a.csv'), self.tmp / 'b.csv')
        self.assertEqual((self.tmp / 'a.csv').read_bytes(), (self.tmp / 'b.csv').read_bytes())
        header = (self.tmp / 'a.csv').read_text().splitlines()[0]
        self.assertEqual(header, 'seq,origin_dc,op,object_id,req_latency_ms')

    def test_fine_requirements_read_back_exactly(self):
        """Test requirements finer than six digits survive a write and read."""
        trace = [TraceRecord(0, 'A', READ, 1, 0.1234567891), TraceRecord(1, 'B', WRITE, 4)]
        write_trace(trace, self.tmp / 'fine.csv')
        self.assertIn('123.4567891', (self.tmp / 'fine.csv').read_text())
        self.assertEqual(read_trace(self.tmp / 'fine.csv'), trace)
