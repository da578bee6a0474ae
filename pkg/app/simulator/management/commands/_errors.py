"""
Exit codes shared by the simulator commands.
"""
from django.core.management.base import CommandError

from geolayer.exceptions import ConfigError, GeoLayerError, ReportSchemaError

EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_REPORT = 4


def command_error(exc: GeoLayerError) -> CommandError:
    """Translate a library error into a ``CommandError`` with its exit code."""
    if isinstance(exc, ConfigError):
        return CommandError(f"Invalid scenario: {exc}", returncode=EXIT_CONFIG)
    if isinstance(exc, ReportSchemaError):
        return CommandError(f"Report mismatch: {exc}", returncode=EXIT_REPORT)
    return CommandError(f"{exc.module}: {exc}", returncode=EXIT_PIPELINE)
