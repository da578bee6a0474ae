"""
Django command to run a scenario file and write its report CSVs.
"""
from django.core.management.base import BaseCommand

from geolayer.exceptions import GeoLayerError
from simulator.config import load_config
from simulator.services import ScenarioService

from ._errors import command_error


class Command(BaseCommand):
    """Run a scenario: load, layer, place, route, account, report"""
    help = 'Run a GeoLayer scenario file and write its report CSVs'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Scenario file (bundled:<name> for shipped scenarios)')
        parser.add_argument('--strategy', help='geolayer, random<k> or top<k>; overrides [scenario] strategy')
        parser.add_argument('--seed', type=int, help='Overrides [scenario] seed')
        parser.add_argument('--output', help='Report directory')
        parser.add_argument('--dump-layers', action='store_true', help='Also write layers.txt')
        parser.add_argument('--dump-heat', action='store_true', help='Also write heat.csv')
        parser.add_argument('--dump-plans', action='store_true',
                            help='Also write plans.csv and placement_log.csv')
        parser.add_argument('--no-record', action='store_true', help='Do not store a ScenarioRun')

    def handle(self, *args, **options):
        try:
            config = load_config(
                options['config'],
                **{'scenario.strategy': options['strategy'], 'scenario.seed': options['seed']},
            )
            result = ScenarioService.run(
                config,
                output_dir=options['output'],
                dump_layers=options['dump_layers'],
                dump_heat=options['dump_heat'],
                dump_plans=options['dump_plans'],
                record=False if options['no_record'] else None,
            )
        except GeoLayerError as exc:
            raise command_error(exc) from exc

        for name in result.files:
            self.stdout.write(f"  {result.output_dir / name}")
        if result.latency_violations:
            self.stdout.write(self.style.WARNING(
                f"{result.latency_violations} requests exceeded their latency requirement"
            ))
        self.stdout.write(self.style.SUCCESS(
            f"Scenario {result.name} ({result.strategy}): total cost {result.costs.total:.6g}, "
            f"mean latency {result.mean_latency_ms:.1f} ms"
        ))
