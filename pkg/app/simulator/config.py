"""
Scenario files: sectioned key-value text read with configparser and
validated by ``ScenarioConfigSerializer``.
"""
import configparser
import logging
from pathlib import Path

from geolayer.conf import bundled_path
from geolayer.exceptions import ConfigError

logger = logging.getLogger(__name__)

BUNDLED_PREFIX = 'bundled:'
SECTIONS = ('scenario', 'inputs', 'synthetic', 'workload', 'model', 'offline', 'oracle')
OPTIONAL_SECTIONS = ('workload', 'model', 'offline', 'oracle')


def resolve_path(value, base_dir) -> Path:
    """``bundled:<name>`` points into the library data directory, other paths are relative to the config."""
    value = str(value).strip()
    if value.startswith(BUNDLED_PREFIX):
        return bundled_path(value[len(BUNDLED_PREFIX):])
    path = Path(value).expanduser()
    if not path.is_absolute():
        path = Path(base_dir) / path
    return path


def read_sections(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError({'config': [f"file not found: {path}"]}, path)
    parser = configparser.ConfigParser(inline_comment_prefixes=('#', ';'))
    try:
        parser.read(path, encoding='utf-8')
    except configparser.Error as exc:
        raise ConfigError({'config': [str(exc)]}, path) from None
    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigError({name: ['unknown section'] for name in unknown}, path)
    return {name: dict(parser.items(name)) for name in parser.sections()}


def _flatten(errors, prefix=''):
    flat = {}
    for name, value in errors.items():
        key = f"{prefix}{name}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{key}."))
        else:
            flat[key] = [str(v) for v in value]
    return flat


def load_config(path, **overrides) -> dict:
    """
    Parse and validate a scenario file. ``overrides`` are ``section.field``
    keys applied before validation (the command line's ``--strategy``,
    ``--seed``).
    """
    from .serializers import ScenarioConfigSerializer

    path = resolve_path(path, Path.cwd())
    sections = read_sections(path)
    for key, value in overrides.items():
        if value is None:
            continue
        section, name = key.split('.', 1)
        sections.setdefault(section, {})[name] = value
    sections.setdefault('scenario', {}).setdefault('name', path.stem)
    for name in OPTIONAL_SECTIONS:
        sections.setdefault(name, {})

    serializer = ScenarioConfigSerializer(data=sections, context={'base_dir': path.resolve().parent})
    if not serializer.is_valid():
        raise ConfigError(_flatten(serializer.errors), path)
    config = serializer.validated_data
    config['source'] = str(path)
    logger.info("Loaded scenario %s (%s, seed %s)",
                config['scenario']['name'], config['scenario']['strategy'], config['scenario']['seed'])
    return config
