"""
Tests for the latency-aware layered graph.
"""
import math
import random

import networkx as nx
from django.test import SimpleTestCase

from geolayer.conf import bundled_path
from geolayer.exceptions import NotCrossEdgeError
from geolayer.graph import Graph, Partitioning
from geolayer.layers import (
    LatencyThresholds,
    LayeredGraph,
    assign_latency,
    build_bridge_subgraphs,
    build_layers,
    layer_of_latency,
)
from geolayer.wan import load_wan_profile

from .fixtures import path_graph, profile, split, triangle

FIVE = ('USEast', 'USWest', 'London', 'Singapore', 'Beijing')


def five_dc_graph():
    """Two vertices per DC, local edge inside each DC and one cross edge per DC pair."""
    labels = [f"{dc}{i}" for dc in FIVE for i in range(2)]
    edges = [(2 * k, 2 * k + 1) for k in range(len(FIVE))]
    for a in range(len(FIVE)):
        for b in range(a + 1, len(FIVE)):
            edges.append((2 * a + 1, 2 * b))
    graph = Graph(labels, edges)
    return graph, Partitioning(graph, {v: FIVE[v // 2] for v in graph.vertex_ids})


class ThresholdTests(SimpleTestCase):
    """Test thresholds and bucket arithmetic."""

    def setUp(self):
        self.thresholds = LatencyThresholds.fixed_interval(100, 4)

    def test_layer_of_latency(self):
        """Test 50 ms lands in layer 1, 250 ms in layer 3 and 350 ms in layer 4."""
        self.assertEqual(layer_of_latency(0.05, self.thresholds), 1)
        self.assertEqual(layer_of_latency(0.25, self.thresholds), 3)
        self.assertEqual(layer_of_latency(0.35, self.thresholds), 4)

    def test_interval_is_lower_closed(self):
        """Test a requirement of exactly 100 ms belongs to layer 2."""
        self.assertEqual(layer_of_latency(0.1, self.thresholds), 2)

    def test_top_layer_catches_all(self):
        """Test any large requirement lands in the open top layer."""
        self.assertEqual(layer_of_latency(1e6, self.thresholds), self.thresholds.h)
        self.assertEqual(self.thresholds.bounds(4), (0.3, math.inf))

    def test_covering(self):
        """Test covering 256 ms with 100 ms buckets gives four layers."""
        thresholds = LatencyThresholds.covering(100, 0.256)
        self.assertEqual(thresholds.cuts, (0.0, 0.1, 0.2, 0.3))

    def test_invalid_thresholds(self):
        """Test thresholds must start at zero and increase."""
        with self.assertRaises(ValueError):
            LatencyThresholds((0.1, 0.2))
        with self.assertRaises(ValueError):
            LatencyThresholds((0.0, 0.2, 0.2))


class LayeredGraphTests(SimpleTestCase):
    """Test layers, bridge subgraphs and the hierarchy on the five-DC profile."""

    def setUp(self):
        self.wan = load_wan_profile(bundled_path('alibaba-5dc.wan'))
        self.graph, self.parts = five_dc_graph()
        self.layered = LayeredGraph.build(self.graph, self.parts, self.wan, interval_ms=100)

    def cross(self, a, b):
        return self.graph.edge_between(2 * FIVE.index(a) + 1, 2 * FIVE.index(b))

    def test_assign_latency(self):
        """Test a Singapore-Beijing edge carries 75 ms."""
        edge = self.cross('Singapore', 'Beijing')
        self.assertEqual(assign_latency(edge, self.graph, self.parts, self.wan), 0.075)

    def test_assign_latency_local_edge(self):
        """Test an intra-DC edge is rejected."""
        with self.assertRaises(NotCrossEdgeError):
            assign_latency(0 + self.graph.vertex_count, self.graph, self.parts, self.wan)

    def test_measured_links_bucketed(self):
        """Test 69-80 ms links sit in layer 1, 136-178 ms in layer 2, 213-256 ms in layer 3."""
        self.assertIn(self.cross('USEast', 'USWest'), self.layered.layer(1).edges)
        self.assertIn(self.cross('USEast', 'London'), self.layered.layer(1).edges)
        self.assertIn(self.cross('USWest', 'London'), self.layered.layer(2).edges)
        self.assertIn(self.cross('USWest', 'Singapore'), self.layered.layer(2).edges)
        self.assertIn(self.cross('London', 'Beijing'), self.layered.layer(3).edges)
        self.assertEqual(self.layered.layer(4).edges, frozenset())

    def test_layer_vertices_are_edge_endpoints(self):
        """Test each layer's vertex set is exactly its edges' endpoints."""
        for layer in self.layered.layers:
            endpoints = {v for e in layer.edges for v in self.graph.endpoints[e]}
            self.assertEqual(layer.vertices, endpoints)

    def test_hierarchy(self):
        """Test layer 1 forms two clusters which layer 2 joins under one root."""
        layer1 = {bs.dcs for bs in self.layered.bridge_subgraphs.values() if bs.layer == 1}
        self.assertEqual(layer1, {frozenset({'Singapore', 'Beijing'}), frozenset({'USEast', 'USWest', 'London'})})
        roots = self.layered.roots()
        self.assertEqual(len(roots), 1)
        self.assertEqual(self.layered.layer_of(roots[0]), 2)
        self.assertEqual(self.layered.dcs_under(roots[0]), frozenset(FIVE))
        self.assertEqual(len(self.layered.ancestors('USEast')), 2)

    def test_anchor(self):
        """Test the anchor is the highest node within the allowed layer."""
        self.assertEqual(self.layered.anchor('USEast', 0), 'USEast')
        low = self.layered.anchor('USEast', 1)
        self.assertEqual(self.layered.dcs_under(low), frozenset({'USEast', 'USWest', 'London'}))
        self.assertEqual(self.layered.anchor('USEast', 4), self.layered.roots()[0])

    def test_cluster_members_point_to_link(self):
        """Test every cluster member's parent is the cluster's bridge subgraph."""
        for bs_id, cluster in self.layered.clusters.items():
            self.assertEqual(len(set(cluster.members)), len(cluster.members))
            for member in cluster.members:
                self.assertEqual(self.layered.parent[member], bs_id)

    def test_ids_deterministic(self):
        """Test rebuilding gives the same ids and dump."""
        again = LayeredGraph.build(self.graph, self.parts, self.wan, interval_ms=100)
        self.assertEqual(sorted(again.bridge_subgraphs), sorted(self.layered.bridge_subgraphs))
        self.assertEqual(again.dump(), self.layered.dump())
        self.assertTrue(self.layered.dump().startswith('thresholds_ms 0 100 200 300 inf\n'))

    def test_eta_relative_to_top(self):
        """Test eta is one at the top layer and smaller below it."""
        top = self.layered.top_layer()
        self.assertEqual(top, 3)
        self.assertEqual(self.layered.eta(top), 1.0)
        self.assertLess(self.layered.eta(1), self.layered.eta(2))


class EdgeCaseTests(SimpleTestCase):
    """Test degenerate layered graphs."""

    def test_no_cross_edges(self):
        """Test a single-DC graph has no bridge subgraphs and the DC is its own root."""
        graph = path_graph(4)
        parts = Partitioning(graph, {v: 'A' for v in graph.vertex_ids})
        wan = profile({('A', 'B'): 50})
        layered = LayeredGraph.build(graph, parts, wan)

        self.assertEqual(layered.bridge_subgraphs, {})
        self.assertIn('A', layered.roots())

    def test_equal_latencies_one_layer(self):
        """Test all links at one latency fill exactly one layer."""
        graph = path_graph(6)
        parts = split(graph, ['A', 'B', 'C'])
        wan = profile({('A', 'B'): 120, ('A', 'C'): 120, ('B', 'C'): 120})
        layers = build_layers(parts.cross_edges, LatencyThresholds.covering(100, 0.12), wan, graph, parts)

        self.assertEqual([layer.index for layer in layers if layer.edges], [2])

    def test_bridge_subgraphs_nest(self):
        """Test the 80 ms link joins A and B at layer 1 and the 150 ms link adds C at layer 2."""
        graph = path_graph(6)
        parts = split(graph, ['A', 'B', 'C'])
        layers = build_layers(parts.cross_edges, LatencyThresholds.fixed_interval(100, 4), triangle(), graph, parts)
        bridge_subgraphs, clusters, parent = build_bridge_subgraphs(layers, graph, parts)

        self.assertEqual(sorted(bridge_subgraphs), ['BS1.7', 'BS2.9'])
        low, top = bridge_subgraphs['BS1.7'], bridge_subgraphs['BS2.9']
        self.assertEqual(low.merged, ('A', 'B'))
        self.assertEqual(low.vertices, frozenset({1, 2}))
        self.assertEqual(low.parent, 'BS2.9')
        self.assertEqual(top.merged, ('BS1.7', 'C'))
        self.assertEqual(top.dcs, frozenset({'A', 'B', 'C'}))
        self.assertEqual(clusters['BS2.9'].members, ('BS1.7', 'C'))
        self.assertEqual(parent, {'A': 'BS1.7', 'B': 'BS1.7', 'BS1.7': 'BS2.9', 'C': 'BS2.9'})


class RandomInvariantTests(SimpleTestCase):
    """Test layered-graph invariants over random partitioned graphs."""

    def setUp(self):
        self.wan = load_wan_profile(bundled_path('alibaba-6dc.wan'))

    def random_instance(self, seed):
        rng = random.Random(seed)
        n = rng.randint(8, 30)
        g = nx.gnm_random_graph(n, rng.randint(n - 1, 3 * n), seed=seed)
        if seed % 5 == 0:
            g.remove_edges_from(list(g.edges(n - 1)))
        graph = Graph([f"v{i}" for i in range(n)], sorted(g.edges()))
        dcs = self.wan.dc_ids
        parts = Partitioning(graph, {v: rng.choice(dcs) for v in graph.vertex_ids})
        return graph, parts

    def test_invariants_hold(self):
        """Test partition, monotonicity and hierarchy soundness on 50 instances."""
        for seed in range(50):
            graph, parts = self.random_instance(seed)
            layered = LayeredGraph.build(graph, parts, self.wan, interval_ms=100)
            thresholds = layered.thresholds

            self.assertEqual(sum(len(layer.edges) for layer in layered.layers), len(parts.cross_edges))
            for layer in layered.layers:
                lower, upper = thresholds.bounds(layer.index)
                for e in layer.edges:
                    latency = assign_latency(e, graph, parts, self.wan)
                    self.assertTrue(lower <= latency < upper, (seed, e, latency))

            for k in range(0, thresholds.h + 1):
                cut = thresholds.cuts[k] if k < thresholds.h else math.inf
                contracted = nx.Graph()
                contracted.add_nodes_from(parts.dcs)
                for e in parts.cross_edges:
                    if assign_latency(e, graph, parts, self.wan) < cut:
                        u, v = graph.endpoints[e]
                        contracted.add_edge(parts.dc_of(u), parts.dc_of(v))
                expected = {frozenset(c) for c in nx.connected_components(contracted)}
                self.assertEqual(layered.components_after(k), expected, (seed, k))

    def test_top_layer_unifies_connected_graphs(self):
        """Test a connected input ends in one component over its DCs."""
        for seed in range(1, 50):
            if seed % 5 == 0:
                continue
            graph, parts = self.random_instance(seed)
            if not nx.is_connected(graph.to_networkx()):
                continue
            layered = LayeredGraph.build(graph, parts, self.wan, interval_ms=100)
            self.assertEqual(layered.components_after(layered.h), {frozenset(parts.dcs)}, seed)

    def test_separated_dcs_stay_apart(self):
        """Test two components on disjoint DC sets never unify."""
        graph = Graph([f"v{i}" for i in range(4)], [(0, 1), (2, 3)])
        parts = Partitioning(graph, {0: 'USEast', 1: 'London', 2: 'Singapore', 3: 'Beijing'})
        layered = LayeredGraph.build(graph, parts, self.wan, interval_ms=100)

        self.assertEqual(len(layered.components_after(layered.h)), 2)
