"""
Tests for online and offline layered routing.
"""
from django.test import SimpleTestCase

from geolayer.baselines import place_random_k
from geolayer.costs import DemandMatrix, PlacementState
from geolayer.exceptions import MissingItemError, RoutingError
from geolayer.layers import LayeredGraph
from geolayer.routing import (
    ITERATION_PRESETS,
    MIGRATE,
    RETAIN,
    AssemblyPlan,
    MigrationParams,
    estimate_offline_comm,
    gather_plan,
    holders_of,
    localize,
    migration_test,
    route_offline,
    route_online,
    routing_state_from_plans,
)
from geolayer.workload import stream, synthetic_graph

from .fixtures import small_instance, triangle


class OnlineRoutingTests(SimpleTestCase):
    """Test bottom-up expanding retrieval."""

    def setUp(self):
        self.graph, self.parts, self.patterns, _, _ = small_instance()
        self.wan = triangle()
        self.layered = LayeredGraph.build(self.graph, self.parts, self.wan, 100)
        self.homes = PlacementState.home_only(self.parts.homes())

    def test_local_pattern(self):
        """Test a pattern held entirely by its origin is served locally."""
        placement = self.homes.with_replica(2, 'A')
        plan = route_online(self.patterns[0], 'A', placement, self.layered)
        self.assertEqual(plan.servers, frozenset(['A']))
        self.assertEqual(plan.wan_bytes, 0)
        self.assertEqual(plan.latency, 0.0)
        self.assertEqual(plan.layers_visited, 0)

    def test_greedy_prefers_largest_holder(self):
        """Test the DC holding four of five items is picked before the other."""
        plan = route_online(self.patterns[0], 'C', self.homes, self.layered)
        self.assertEqual(plan.served, {'A': (0, 1, 6, 7), 'B': (2,)})
        self.assertEqual(plan.wan_bytes, 3500)
        self.assertAlmostEqual(plan.latency, 0.225 + 2500 * 8 / 1e8)

    def test_escalation_visits_each_layer_once(self):
        """Test a far item is reached after one visit per layer on the way up."""
        plan = route_online(self.patterns[1], 'A', self.homes, self.layered)
        self.assertEqual(plan.layers_visited, 2)
        self.assertEqual(plan.assignment(), {3: 'B', 9: 'B', 4: 'C'})

    def test_near_cluster_is_exhausted_first(self):
        """Test a replica inside the nearest cluster wins over the farther home."""
        placement = self.homes.with_replica(4, 'B')
        plan = route_online(self.patterns[1], 'A', placement, self.layered)
        self.assertEqual(plan.servers, frozenset(['B']))
        self.assertEqual(plan.layers_visited, 1)

    def test_coverage_and_replica_only_servers(self):
        """Test every requested item is served once by a holder."""
        placement = self.homes.with_replicas([0, 1, 6], 'C')
        for pattern in self.patterns.values():
            for origin in ('A', 'B', 'C'):
                plan = route_online(pattern, origin, placement, self.layered)
                assignment = plan.assignment()
                self.assertEqual(sorted(assignment), sorted(pattern.items))
                for x, d in assignment.items():
                    self.assertTrue(placement.holds(x, d))

    def test_missing_item(self):
        """Test a pattern item without any replica is reported by id."""
        placement = self.homes.without_item(4)
        with self.assertRaises(MissingItemError) as ctx:
            route_online(self.patterns[1], 'A', placement, self.layered)
        self.assertEqual(ctx.exception.item_id, 4)

    def test_plan_rows(self):
        """Test plan rows list the server and size of each item."""
        plan = route_online(self.patterns[1], 'A', self.homes, self.layered)
        self.assertEqual(plan.rows(5, self.graph), [
            (5, 3, 'B', 1000), (5, 9, 'B', 250), (5, 4, 'C', 1000),
        ])

    def test_routing_state_from_plans(self):
        """Test per-request plans aggregate into sigma and rho."""
        demand = DemandMatrix({}, {}, {(0, 'C'): 3})
        plans = {(0, 'C'): route_online(self.patterns[0], 'C', self.homes, self.layered)}
        routing = routing_state_from_plans(plans, self.patterns, demand, 1.0)
        self.assertEqual(routing.sigma[(2, 'C')], 'B')
        self.assertEqual(routing.sigma[(0, 'C')], 'A')
        self.assertEqual(routing.rho[(0, 'C')], frozenset(['A', 'B']))


class MigrationTestTests(SimpleTestCase):
    """Test the migrate-or-retain inequality."""

    def test_large_local_share_retains(self):
        """Test 80 KB of messages against 200 KB of local data retains."""
        params = MigrationParams(iota=10, msg_bytes=1000, xi=0.0)
        self.assertEqual(migration_test(200_000, 5, 3, params), RETAIN)

    def test_no_local_data_migrates(self):
        """Test a site with only communication cost migrates at eta 1."""
        params = MigrationParams(iota=10, msg_bytes=1000, xi=50_000.0, eta={1: 1.0})
        self.assertEqual(migration_test(0, 1, 0, params, layer=1), MIGRATE)

    def test_threshold_relaxes_at_higher_layers(self):
        """Test a smaller eta raises the bar for migrating."""
        params = MigrationParams(iota=1, msg_bytes=1000, xi=10_000.0, eta={1: 1.0, 2: 0.5})
        self.assertEqual(migration_test(0, 2, 3, params, layer=1), MIGRATE)
        self.assertEqual(migration_test(0, 2, 3, params, layer=2), RETAIN)

    def test_params_validation(self):
        """Test invalid iteration counts, message sizes and eta values raise."""
        with self.assertRaises(RoutingError):
            MigrationParams(iota=0)
        with self.assertRaises(RoutingError):
            MigrationParams(msg_bytes=0)
        with self.assertRaises(RoutingError):
            MigrationParams(eta={1: 0.0})

    def test_job_presets(self):
        """Test a PageRank-like job plans 15 iterations."""
        self.assertEqual(MigrationParams.from_settings(job='pagerank').iota, 15)
        self.assertEqual(ITERATION_PRESETS['pagerank'], 15)


class OfflineEstimateTests(SimpleTestCase):
    """Test the offline communication estimate."""

    def plan(self, migrated=0, boundary=0, replicas=0, retained=('A',)):
        return AssemblyPlan(retained, {}, [], migrated, 0, replicas, boundary)

    def test_boundary_traffic(self):
        """Test 100 boundary vertices over 15 iterations of 1 KB messages."""
        params = MigrationParams(iota=15, msg_bytes=1000)
        plan = self.plan(migrated=4000, boundary=100, retained=('A', 'B'))
        self.assertEqual(estimate_offline_comm(plan, params), 4000 + 1_500_000)

    def test_zero_iterations(self):
        """Test no iterations leaves migration bytes only."""
        plan = self.plan(migrated=4000, boundary=100, replicas=7)
        self.assertEqual(estimate_offline_comm(plan, MigrationParams(), iterations=0), 4000)

    def test_migration_ratio(self):
        """Test the migration ratio divides migrated by requested bytes."""
        plan = AssemblyPlan(('A',), {}, [], 500, 2000, 0, 0)
        self.assertEqual(plan.migration_ratio, 0.25)
        self.assertEqual(self.plan().migration_ratio, 0.0)


class OfflineRoutingTests(SimpleTestCase):
    """Test localize-then-assemble planning."""

    def setUp(self):
        self.graph, self.parts, _, _, _ = small_instance()
        self.layered = LayeredGraph.build(self.graph, self.parts, triangle(), 100)
        self.homes = PlacementState.home_only(self.parts.homes())

    def test_single_site_request(self):
        """Test items already together stay where they are."""
        plan = route_offline([0, 1, 6, 7], self.homes, self.layered, MigrationParams())
        self.assertEqual(plan.retained, ('A',))
        self.assertEqual(plan.migrations, [])
        self.assertEqual(estimate_offline_comm(plan, MigrationParams()), 0)

    def test_gather_plan(self):
        """Test gathering moves every item the site lacks."""
        plan = gather_plan([0, 2, 4], self.homes, self.layered, 'B')
        self.assertEqual(plan.retained, ('B',))
        self.assertEqual(plan.migrations, [(0, 'A', 'B'), (4, 'C', 'B')])
        self.assertEqual(plan.migrated_bytes, 2000)

    def test_missing_item(self):
        """Test an offline request over a deleted item raises."""
        with self.assertRaises(MissingItemError):
            route_offline([0, 4], self.homes.without_item(4), self.layered, MigrationParams())

    def test_holders_of(self):
        """Test holder lookup returns every DC and rejects deleted items."""
        placement = self.homes.with_replica(2, 'A')
        self.assertEqual(holders_of(placement, 2), frozenset(['A', 'B']))
        with self.assertRaises(MissingItemError):
            holders_of(placement.without_item(2), 2)

    def test_localize_keeps_every_holder(self):
        """Test localization leaves duplicate holders for assembly to resolve."""
        placement = self.homes.with_replica(2, 'A').with_replica(2, 'C')
        candidates = localize([2, 3], placement, self.layered)
        self.assertEqual(candidates, {2: frozenset(['A', 'B', 'C']), 3: frozenset(['B'])})

    def test_duplicates_settle_at_one_retained_holder(self):
        """Test a replicated item is placed once, at the retained site holding most of the request."""
        placement = self.homes.with_replica(2, 'A')
        plan = route_offline([0, 1, 2, 6, 7], placement, self.layered, MigrationParams())
        self.assertEqual(plan.locations[2], 'A')
        self.assertEqual(plan.migrations, [])

    def test_assembled_plan_beats_gathering(self):
        """Test two disconnected blocks are processed in place rather than gathered."""
        request = [0, 1, 6, 4, 5, 10]
        params = MigrationParams()
        plan = route_offline(request, self.homes, self.layered, params)
        self.assertEqual(plan.strategy, 'assembled')
        self.assertEqual(plan.retained, ('A', 'C'))
        self.assertEqual(plan.migrations, [])
        cost = estimate_offline_comm(plan, params)
        self.assertEqual(cost, 0)
        for d in ('A', 'B', 'C'):
            gathered = gather_plan(request, self.homes, self.layered, d)
            self.assertLess(cost, estimate_offline_comm(gathered, params))


class OfflineDominanceTests(SimpleTestCase):
    """Test offline plans on random skewed placements."""

    def test_plans_are_valid_and_beat_gathering(self):
        """Test every plan covers its items once and never costs more than one-site gathering."""
        wan = triangle()
        for seed in range(20):
            graph, parts = synthetic_graph(45, ['A', 'B', 'C'], degree=4, seed=seed)
            layered = LayeredGraph.build(graph, parts, wan, 100)
            items = sorted(graph.items)
            placement = place_random_k(items, 2, wan.dc_ids, seed=seed, homes=parts.homes())
            params = MigrationParams.from_settings(layered, job='pagerank')
            rng = stream(seed, 'offline')

            for _ in range(3):
                request = sorted(int(x) for x in rng.choice(items, size=15, replace=False))
                plan = route_offline(request, placement, layered, params)

                self.assertTrue(plan.retained)
                self.assertEqual(sorted(plan.locations), request)
                for x, site in plan.locations.items():
                    self.assertIn(site, plan.retained)
                moved = {x: dst for x, _, dst in plan.migrations}
                for x, site in plan.locations.items():
                    self.assertTrue(placement.holds(x, site) or moved.get(x) == site)

                cost = estimate_offline_comm(plan, params)
                for d in wan.dc_ids:
                    gathered = gather_plan(request, placement, layered, d)
                    self.assertLessEqual(cost, estimate_offline_comm(gathered, params), seed)
