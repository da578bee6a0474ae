"""
Error hierarchy for the geolayer library.

Each module raises subclasses of its own family so callers (the scenario
service, management commands, the run API) can attribute a failure to the
stage that produced it.
"""


class GeoLayerError(Exception):
    """Base class for every error raised by the library."""
    module = 'geolayer'


# graph-core

class GraphError(GeoLayerError):
    module = 'graph'


class GraphParseError(GraphError):
    def __init__(self, path, line_no, line):
        self.path = str(path)
        self.line_no = line_no
        self.line = line
        super().__init__(f"{self.path}:{line_no}: cannot parse {line!r}")


class DisconnectedGraphError(GraphError):
    def __init__(self, components):
        self.components = components
        super().__init__(f"graph is not connected ({components} components)")


class UnassignedVertexError(GraphError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"vertex {label!r} has no partition assignment")


class UnknownItemError(GraphError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"unknown data item {item_id}")


# wan-model

class WanProfileError(GeoLayerError):
    module = 'wan'


class WanParseError(WanProfileError):
    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {reason}")


class UnknownDCError(WanProfileError):
    def __init__(self, dc):
        self.dc = dc
        super().__init__(f"unknown data center {dc!r}")


class MissingLinkError(WanProfileError):
    def __init__(self, src, dst):
        self.pair = (src, dst)
        super().__init__(f"no link profile for {src} -> {dst}")


class NegativePriceError(WanProfileError):
    def __init__(self, owner, field, value):
        self.owner = owner
        self.field = field
        super().__init__(f"{owner}: {field} must be >= 0, got {value}")


class ZeroBandwidthError(WanProfileError):
    def __init__(self, src, dst):
        self.pair = (src, dst)
        super().__init__(f"link {src} -> {dst} has no bandwidth")


class EmptyServingMapError(WanProfileError):
    def __init__(self, origin):
        self.origin = origin
        super().__init__(f"request from {origin} has no serving DC")


# cost-model

class CostModelError(GeoLayerError):
    module = 'costs'


class PlacementInvariantError(CostModelError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"item {item_id} would be left without replicas")


class RoutingConstraintError(CostModelError):
    def __init__(self, item_id, origin, server=None):
        self.item_id = item_id
        self.origin = origin
        self.server = server
        if server is None:
            msg = f"reads of item {item_id} from {origin} have no server"
        else:
            msg = f"item {item_id} read from {origin} routed to {server}, which holds no replica"
        super().__init__(msg)


class EmptyServingSetError(CostModelError):
    def __init__(self, pattern_id, origin):
        self.pattern_id = pattern_id
        self.origin = origin
        super().__init__(f"pattern {pattern_id} read from {origin} has no serving DC")


class InapplicableActionError(CostModelError):
    def __init__(self, action, reason):
        self.action = action
        super().__init__(f"{action}: {reason}")


# layered-graph

class LayerError(GeoLayerError):
    module = 'layers'


class NotCrossEdgeError(LayerError):
    def __init__(self, edge_id):
        self.edge_id = edge_id
        super().__init__(f"edge {edge_id} does not cross partitions")


# dhd

class DhdError(GeoLayerError):
    module = 'dhd'


class SingularSystemError(DhdError):
    pass


# placement

class PlacementError(GeoLayerError):
    module = 'placement'


class NoCandidateError(PlacementError):
    def __init__(self, region_id):
        self.region_id = region_id
        super().__init__(f"region {region_id} has no candidate bridge subgraph")


# routing

class RoutingError(GeoLayerError):
    module = 'routing'


class MissingItemError(RoutingError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"item {item_id} has no replica anywhere")


# baselines

class BaselineError(GeoLayerError):
    module = 'baselines'


# oracle

class OracleError(GeoLayerError):
    module = 'oracle'


class InfeasibleError(OracleError):
    def __init__(self, constraint, witness=None):
        self.constraint = constraint
        self.witness = witness
        super().__init__(f"no assignment satisfies constraint ({constraint}): {witness}")


class ZeroOptimumError(OracleError):
    def __init__(self, optimum):
        self.optimum = optimum
        super().__init__(f"optimality gap undefined for C* = {optimum}")


class EnumerationBoundError(OracleError):
    pass


# sim-cli

class ScenarioError(GeoLayerError):
    module = 'simulator'


class ConfigError(ScenarioError):
    def __init__(self, errors, path=None):
        self.errors = errors
        self.path = path
        if isinstance(errors, dict):
            detail = '; '.join(f"{name}: {', '.join(map(str, msgs))}"
                               for name, msgs in sorted(errors.items()))
        else:
            detail = str(errors)
        prefix = f"{path}: " if path else ''
        super().__init__(f"{prefix}{detail}")


class ReportSchemaError(ScenarioError):
    pass
