"""
Serializers for scenario files and run records.
"""
import re

from rest_framework import serializers

from geolayer.routing import ITERATION_PRESETS

from .config import resolve_path
from .models import ScenarioRun

STRATEGY_RE = re.compile(r'^(geolayer|random[1-9]\d*|top[1-9]\d*)$')


class PathField(serializers.CharField):
    """A file path resolved against the scenario file's directory; must exist."""

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        path = resolve_path(value, self.context.get('base_dir', '.'))
        if not path.is_file():
            raise serializers.ValidationError(f"file not found: {path}")
        return path


class ScenarioSectionSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=100)
    seed = serializers.IntegerField(default=0, min_value=0)
    strategy = serializers.CharField(default='geolayer')
    gamma_max_ms = serializers.FloatField(min_value=0, default=300.0)
    output = serializers.CharField(required=False)

    def validate_strategy(self, value):
        value = value.strip().lower()
        if not STRATEGY_RE.match(value):
            raise serializers.ValidationError(
                f"unknown strategy {value!r}; expected geolayer, random<k> or top<k>"
            )
        return value


class InputsSectionSerializer(serializers.Serializer):
    wan = PathField()
    graph = PathField(required=False)
    partition = PathField(required=False)
    trace = PathField(required=False)
    prices = PathField(required=False)
    provider = serializers.CharField(required=False)
    vertex_bytes = serializers.IntegerField(default=1000, min_value=1)
    edge_bytes = serializers.IntegerField(default=250, min_value=1)

    def validate(self, attrs):
        if ('graph' in attrs) != ('partition' in attrs):
            missing = 'partition' if 'graph' in attrs else 'graph'
            raise serializers.ValidationError({missing: 'graph and partition are given together'})
        if 'provider' in attrs and 'prices' not in attrs:
            raise serializers.ValidationError({'prices': 'a price book is required to select a provider'})
        return attrs


class SyntheticSectionSerializer(serializers.Serializer):
    vertices = serializers.IntegerField(min_value=2, default=60)
    degree = serializers.IntegerField(min_value=1, default=4)
    cross_per_pair = serializers.IntegerField(min_value=1, default=2)


class WorkloadSectionSerializer(serializers.Serializer):
    patterns = serializers.IntegerField(min_value=1, default=20)
    hops = serializers.IntegerField(min_value=1, default=3)
    source_skew = serializers.FloatField(min_value=0, default=1.0)
    pattern_skew = serializers.FloatField(min_value=0, default=1.0)
    origin_locality = serializers.FloatField(min_value=0, max_value=1, default=0.7)
    write_item_fraction = serializers.FloatField(min_value=0, max_value=1, default=0.3)
    write_request_fraction = serializers.FloatField(min_value=0, max_value=1, default=0.1)
    requests = serializers.IntegerField(min_value=1, default=2000)
    window_requests = serializers.IntegerField(min_value=1, default=1000)


class ModelSectionSerializer(serializers.Serializer):
    """Overrides of the library defaults; absent keys keep ``settings.GEOLAYER``."""
    alpha = serializers.FloatField(min_value=0, required=False)
    gamma = serializers.FloatField(min_value=0, max_value=1, required=False)
    beta = serializers.FloatField(min_value=0, required=False)
    lambda1 = serializers.FloatField(min_value=0, required=False)
    lambda2 = serializers.FloatField(min_value=0, required=False)
    association_scale = serializers.FloatField(min_value=0, required=False)
    storage_months = serializers.FloatField(min_value=0, required=False)
    theta_quantile = serializers.FloatField(min_value=0, max_value=1, required=False)
    theta_c_quantile = serializers.FloatField(min_value=0, max_value=1, required=False)
    xi_fraction = serializers.FloatField(min_value=0, required=False)
    layer_interval_ms = serializers.FloatField(min_value=0, required=False)
    precache = serializers.BooleanField(default=True)
    refine = serializers.BooleanField(default=True)
    maintain = serializers.BooleanField(default=True)

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError('alpha must be positive')
        return value

    def validate_gamma(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('gamma must lie in (0, 1)')
        return value

    def validate_layer_interval_ms(self, value):
        if value <= 0:
            raise serializers.ValidationError('layer_interval_ms must be positive')
        return value


class OfflineSectionSerializer(serializers.Serializer):
    requests = serializers.IntegerField(min_value=0, default=5)
    radius = serializers.IntegerField(min_value=1, default=2)
    job = serializers.ChoiceField(choices=sorted(ITERATION_PRESETS), default='pagerank')


class OracleSectionSerializer(serializers.Serializer):
    enabled = serializers.BooleanField(default=False)
    max_patterns = serializers.IntegerField(min_value=1, default=6)
    max_items = serializers.IntegerField(min_value=1, required=False)


class ScenarioConfigSerializer(serializers.Serializer):
    """A whole scenario file, one nested serializer per section."""
    scenario = ScenarioSectionSerializer()
    inputs = InputsSectionSerializer()
    synthetic = SyntheticSectionSerializer(required=False)
    workload = WorkloadSectionSerializer()
    model = ModelSectionSerializer()
    offline = OfflineSectionSerializer()
    oracle = OracleSectionSerializer()

    def validate(self, attrs):
        if 'graph' not in attrs['inputs'] and 'synthetic' not in attrs:
            raise serializers.ValidationError(
                {'inputs': {'graph': ['give graph and partition files or a [synthetic] section']}}
            )
        return attrs


class ScenarioRunSerializer(serializers.ModelSerializer):
    """Serializer for recorded scenario runs."""

    class Meta:
        model = ScenarioRun
        fields = [
            'id', 'name', 'strategy', 'seed', 'config_path', 'output_dir', 'status',
            'storage_cost', 'read_cost', 'write_cost', 'association_cost', 'total_cost',
            'mean_latency_ms', 'latency_violations', 'wan_bytes', 'migration_ratio',
            'evicted_replicas', 'error', 'created_at', 'finished_at',
        ]
        read_only_fields = fields


class RunRequestSerializer(serializers.Serializer):
    """Body of ``POST /api/runs/``."""
    config_path = serializers.CharField()
    strategy = serializers.CharField(required=False)
    seed = serializers.IntegerField(required=False, min_value=0)
    output_dir = serializers.CharField(required=False)

    def validate_strategy(self, value):
        value = value.strip().lower()
        if not STRATEGY_RE.match(value):
            raise serializers.ValidationError(f"unknown strategy {value!r}")
        return value


class CompareQuerySerializer(serializers.Serializer):
    against = serializers.IntegerField()
