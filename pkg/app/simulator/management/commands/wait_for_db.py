"""
Django command to wait for the run registry database to be available.
"""
import logging
import time

from psycopg2 import OperationalError as Psycopg2Error

from django.db.utils import OperationalError
from django.core.management.base import BaseCommand, CommandError

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """Pause until the database answers, giving up after ``--timeout`` seconds"""

    def add_arguments(self, parser):
        parser.add_argument('--timeout', type=int, default=60, help='Seconds before giving up (0 waits forever)')

    def handle(self, *args, **options):
        """Entrypoint for command."""
        self.stdout.write('Waiting for database...')
        timeout = options['timeout']
        waited = 0
        while True:
            try:
                self.check(databases=['default'])
                break
            except (Psycopg2Error, OperationalError) as exc:
                logger.debug("Database check failed: %s", exc)
                if timeout and waited >= timeout:
                    raise CommandError(f"Database unavailable after {waited} seconds")
                self.stdout.write('Database unavailable, waiting 1 second...')
                time.sleep(1)
                waited += 1

        self.stdout.write(self.style.SUCCESS('Database available!'))
