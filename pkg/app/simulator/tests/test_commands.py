"""
Test custom Django management commands.
"""
from io import StringIO
from unittest.mock import patch

from psycopg2 import OperationalError as Psycopg2Error

from django.core.management import call_command
from django.core.management.base import CommandError
from django.db.utils import OperationalError
from django.test import SimpleTestCase

from geolayer.exceptions import MissingItemError
from geolayer.tests.fixtures import TempDirMixin, write_files
from simulator import reports
from simulator.management.commands._errors import EXIT_CONFIG, EXIT_PIPELINE, EXIT_REPORT

from .test_reports import write_report


@patch('simulator.management.commands.wait_for_db.Command.check')
class WaitForDbTests(SimpleTestCase):
    """Test commands."""

    def test_wait_for_db_ready(self, patched_check):
        """Test waiting for db when db is available."""
        patched_check.return_value = True
        call_command('wait_for_db', stdout=StringIO())
        patched_check.assert_called_once_with(databases=['default'])

    @patch('time.sleep')
    def test_wait_for_db_delay(self, patched_sleep, patched_check):
        """Test waiting for database when getting an OperationalError."""
        patched_check.side_effect = [Psycopg2Error] * 2 + \
            [OperationalError] * 3 + [True]

        call_command('wait_for_db', stdout=StringIO())

        self.assertEqual(patched_check.call_count, 6)
        patched_check.assert_called_with(databases=['default'])

    @patch('time.sleep')
    def test_wait_for_db_timeout(self, patched_sleep, patched_check):
        """Test giving up once the timeout has passed."""
        patched_check.side_effect = [OperationalError] * 5

        with self.assertRaises(CommandError):
            call_command('wait_for_db', timeout=2, stdout=StringIO())

        self.assertEqual(patched_check.call_count, 3)


class RunScenarioTests(TempDirMixin, SimpleTestCase):
    """Test the run_scenario command."""

    def test_run(self):
        """Test a run lists its reports and a summary line."""
        out = StringIO()
        call_command('run_scenario', 'bundled:toy3dc.cfg', output=str(self.tmp), no_record=True, stdout=out)
        self.assertIn(reports.COSTS, out.getvalue())
        self.assertIn('Scenario toy3dc (geolayer)', out.getvalue())
        self.assertTrue((self.tmp / reports.HITRATE).is_file())

    def test_strategy_override(self):
        """Test the strategy flag replaces the scenario's."""
        out = StringIO()
        call_command('run_scenario', 'bundled:toy3dc.cfg', strategy='top2', output=str(self.tmp),
                     no_record=True, stdout=out)
        self.assertIn('Scenario toy3dc (top2)', out.getvalue())

    def test_missing_config(self):
        """Test a missing scenario file exits with the config code."""
        with self.assertRaises(CommandError) as ctx:
            call_command('run_scenario', str(self.tmp / 'absent.cfg'), no_record=True)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('absent.cfg', str(ctx.exception))

    def test_missing_wan_profile(self):
        """Test a scenario naming a missing WAN file exits with the config code."""
        paths = write_files(self.tmp, **{'broken.cfg': (
            "[inputs]\nwan = missing.wan\n"
            "graph = bundled:toy3dc.edges\npartition = bundled:toy3dc.parts\n"
        )})
        with self.assertRaises(CommandError) as ctx:
            call_command('run_scenario', str(paths['broken.cfg']), no_record=True)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertIn('missing.wan', str(ctx.exception))

    def test_invalid_strategy(self):
        """Test an unknown strategy flag exits with the config code."""
        with self.assertRaises(CommandError) as ctx:
            call_command('run_scenario', 'bundled:toy3dc.cfg', strategy='nearest', no_record=True)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    @patch('simulator.services.ScenarioService.run', side_effect=MissingItemError(4))
    def test_pipeline_error(self, patched_run):
        """Test a library error exits with the pipeline code and names the module."""
        with self.assertRaises(CommandError) as ctx:
            call_command('run_scenario', 'bundled:toy3dc.cfg', no_record=True)
        self.assertEqual(ctx.exception.returncode, EXIT_PIPELINE)
        self.assertTrue(str(ctx.exception).startswith('routing: item 4'))


class CompareReportsTests(TempDirMixin, SimpleTestCase):
    """Test the compare_reports command."""

    def test_compare(self):
        """Test the comparison table is printed."""
        a = write_report(self.tmp / 'a', total=10.0)
        b = write_report(self.tmp / 'b', total=20.0)
        out = StringIO()
        call_command('compare_reports', str(a), str(b), stdout=out)
        lines = out.getvalue().splitlines()
        self.assertEqual(lines[0], 'metric,a,b,ratio')
        self.assertIn('total,10.0,20.0,2.0', lines)

    def test_missing_directory(self):
        """Test a missing report directory exits with the config code."""
        a = write_report(self.tmp / 'a')
        with self.assertRaises(CommandError) as ctx:
            call_command('compare_reports', str(a), str(self.tmp / 'absent'))
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_schema_mismatch(self):
        """Test reports with other columns exit with the report code."""
        a = write_report(self.tmp / 'a')
        b = write_report(self.tmp / 'b')
        write_files(b, **{reports.WAN: 'src,dst,bytes\nA,B,1\n'})
        with self.assertRaises(CommandError) as ctx:
            call_command('compare_reports', str(a), str(b))
        self.assertEqual(ctx.exception.returncode, EXIT_REPORT)


class SolveOracleTests(TempDirMixin, SimpleTestCase):
    """Test the solve_oracle command."""

    def test_gap_report(self):
        """Test the exact solve writes a gap report with a non-negative gap."""
        out = StringIO()
        call_command('solve_oracle', 'bundled:toy3dc.cfg', max_items=8, output=str(self.tmp), stdout=out)
        rows = reports.read_csv(self.tmp, reports.GAP)
        self.assertEqual(len(rows), 1)
        self.assertLessEqual(int(rows[0]['items']), 8)
        self.assertGreaterEqual(float(rows[0]['gap_percent']), -1e-9)
        self.assertIn('gap', out.getvalue())
