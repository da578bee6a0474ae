"""
Django command to compare two report directories.
"""
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from geolayer.exceptions import GeoLayerError
from simulator import reports

from ._errors import EXIT_CONFIG, command_error


class Command(BaseCommand):
    """Print the headline metrics of report B normalized to report A"""
    help = 'Compare two scenario report directories'

    def add_arguments(self, parser):
        parser.add_argument('a', help='Reference report directory')
        parser.add_argument('b', help='Report directory to normalize')

    def handle(self, *args, **options):
        for key in ('a', 'b'):
            if not Path(options[key]).is_dir():
                raise CommandError(f"report directory not found: {options[key]}", returncode=EXIT_CONFIG)
        try:
            rows = reports.compare(options['a'], options['b'])
        except GeoLayerError as exc:
            raise command_error(exc) from exc
        self.stdout.write(reports.format_table(rows), ending='')
