"""
Django command to solve a scenario's small instance exactly and report the gap.
"""
from django.core.management.base import BaseCommand

from geolayer.exceptions import GeoLayerError
from simulator import reports
from simulator.config import load_config
from simulator.services import ScenarioService

from ._errors import command_error


class Command(BaseCommand):
    """Compare GeoLayer against the exact optimum on a restricted instance"""
    help = 'Solve a scenario sub-instance exactly and write gap.csv'

    def add_arguments(self, parser):
        parser.add_argument('config')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--max-patterns', type=int, help='Overrides [oracle] max_patterns')
        parser.add_argument('--max-items', type=int, help='Overrides [oracle] max_items')
        parser.add_argument('--output', help='Report directory')

    def handle(self, *args, **options):
        try:
            config = load_config(
                options['config'],
                **{
                    'scenario.strategy': 'geolayer',
                    'scenario.seed': options['seed'],
                    'oracle.max_patterns': options['max_patterns'],
                    'oracle.max_items': options['max_items'],
                },
            )
            scenario = ScenarioService.load(config)
            row, feasible, optimum = ScenarioService.solve_gap(
                scenario, config['oracle']['max_patterns'], config['oracle'].get('max_items'),
            )
            directory = ScenarioService.output_dir(config, options['output'])
            path = reports.write_csv(directory, reports.GAP, [row])
        except GeoLayerError as exc:
            raise command_error(exc) from exc

        items, patterns, heuristic, optimal, gap_percent, explored = row
        self.stdout.write(f"  {path}")
        if not feasible:
            self.stdout.write(self.style.WARNING('GeoLayer solution violates a constraint on this instance'))
        self.stdout.write(self.style.SUCCESS(
            f"{items} items, {patterns} patterns: heuristic {heuristic:.6g}, optimum {optimal:.6g}, "
            f"gap {gap_percent:.2f}% ({explored} search nodes)"
        ))
