from rest_framework import mixins, status, viewsets
from rest_framework.decorators import action
from rest_framework.permissions import IsAuthenticated
from rest_framework.response import Response

from geolayer.exceptions import ConfigError, GeoLayerError

from .config import load_config
from .models import ScenarioRun
from .serializers import CompareQuerySerializer, RunRequestSerializer, ScenarioRunSerializer
from .services import ScenarioService


class ScenarioRunViewSet(mixins.CreateModelMixin,
                         mixins.ListModelMixin,
                         mixins.RetrieveModelMixin,
                         viewsets.GenericViewSet):
    """ViewSet for running scenarios and browsing their results"""
    queryset = ScenarioRun.objects.all()
    serializer_class = ScenarioRunSerializer
    permission_classes = [IsAuthenticated]

    def get_serializer_class(self):
        if self.action == 'create':
            return RunRequestSerializer
        return ScenarioRunSerializer

    def create(self, request, *args, **kwargs):
        """
        Run a scenario file and record the run

        POST /api/runs/
        {
            "config_path": "bundled:toy3dc.cfg",
            "strategy": "random3"
        }
        """
        serializer = self.get_serializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        data = serializer.validated_data

        try:
            config = load_config(
                data['config_path'],
                **{'scenario.strategy': data.get('strategy'), 'scenario.seed': data.get('seed')},
            )
        except ConfigError as exc:
            return Response(exc.errors, status=status.HTTP_400_BAD_REQUEST)

        try:
            result = ScenarioService.run(config, output_dir=data.get('output_dir'), record=True)
        except GeoLayerError as exc:
            return Response(
                {'detail': str(exc), 'module': exc.module},
                status=status.HTTP_422_UNPROCESSABLE_ENTITY,
            )

        run = ScenarioRun.objects.filter(output_dir=str(result.output_dir)).first()
        return Response(ScenarioRunSerializer(run).data, status=status.HTTP_201_CREATED)

    @action(detail=True, methods=['get'])
    def compare(self, request, pk=None):
        """
        Metrics of another run normalized to this one

        GET /api/runs/{id}/compare/?against={other_id}
        """
        run = self.get_object()
        query = CompareQuerySerializer(data=request.query_params)
        if not query.is_valid():
            return Response(query.errors, status=status.HTTP_400_BAD_REQUEST)
        other = self.get_queryset().filter(pk=query.validated_data['against']).first()
        if other is None:
            return Response({'detail': 'run to compare against not found'}, status=status.HTTP_404_NOT_FOUND)

        try:
            rows = ScenarioService.compare_runs(run, other)
        except GeoLayerError as exc:
            return Response(
                {'detail': str(exc), 'module': exc.module},
                status=status.HTTP_422_UNPROCESSABLE_ENTITY,
            )
        return Response({
            'run': run.id,
            'against': other.id,
            'metrics': [
                {'metric': metric, 'a': a, 'b': b, 'ratio': ratio}
                for metric, a, b, ratio in rows
            ],
        })
