"""
Access to simulator defaults, overridable through ``settings.GEOLAYER``.
"""
from pathlib import Path

from django.conf import settings

DATA_DIR = Path(__file__).resolve().parent / 'data'

DEFAULTS = {
    # dhd
    'ALPHA': 0.5,
    'GAMMA': 0.1,
    'BETA': 0.3,
    'MAX_ITERS': 200,
    'RESIDUAL_TOL': 1e-8,
    'HALF_LIFE_STEPS': 10,
    'DELTA_Q': 0.1,
    # cost-model
    'LAMBDA1': 0.5,
    'LAMBDA2': 0.5,
    'ASSOCIATION_SCALE': 1.0,
    'STORAGE_MONTHS_PER_WINDOW': 1.0,
    # placement
    'THETA_QUANTILE': 0.55,
    'THETA_C_QUANTILE': 0.10,
    'EVICTION_BATCH': 1000,
    'MAINTENANCE_WINDOWS': 1,
    # routing
    'XI_FRACTION': 0.2,
    'MSG_BYTES': 1000,
    'IOTA': 15,
    # layered-graph
    'LAYER_INTERVAL_MS': 100,
    # sim-cli
    'OUTPUT_DIR': 'reports',
    'RECORD_RUNS': True,
}


def get_setting(name):
    """Return ``settings.GEOLAYER[name]`` falling back to the library default."""
    overrides = getattr(settings, 'GEOLAYER', {}) if settings.configured else {}
    if name in overrides:
        return overrides[name]
    try:
        return DEFAULTS[name]
    except KeyError:
        raise KeyError(f"unknown geolayer setting {name!r}") from None


def bundled_path(name):
    """Path of a data file shipped in ``geolayer/data``."""
    return DATA_DIR / name
