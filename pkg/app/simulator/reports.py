"""
CSV report files of a scenario run and their comparison.

Floats are written with ``repr`` so that reruns with the same seed produce
byte-identical files.
"""
import csv
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from geolayer.costs import CostBreakdown
from geolayer.exceptions import ReportSchemaError
from geolayer.placement import PlacementEntry

logger = logging.getLogger(__name__)

COSTS = 'costs.csv'
LATENCY = 'latency.csv'
WAN = 'wan.csv'
MIGRATION = 'migration.csv'
HITRATE = 'hitrate.csv'
GAP = 'gap.csv'
LAYERS = 'layers.txt'
HEAT = 'heat.csv'
PLANS = 'plans.csv'
PLACEMENT_LOG = 'placement_log.csv'

HEADERS = {
    COSTS: CostBreakdown.CSV_HEADER,
    LATENCY: ('request_id', 'pattern_id', 'origin_dc', 'latency_ms', 'requirement_ms',
              'servers', 'within_requirement'),
    WAN: ('src_dc', 'dst_dc', 'read_bytes', 'write_bytes', 'total_bytes'),
    MIGRATION: ('request_id', 'source', 'items', 'requested_bytes', 'migrated_bytes',
                'migration_ratio', 'comm_bytes', 'gather_comm_bytes', 'strategy'),
    HITRATE: ('theta_quantile', 'cached_items', 'hits', 'hit_rate'),
    GAP: ('items', 'patterns', 'heuristic_cost', 'optimal_cost', 'gap_percent', 'search_nodes'),
    HEAT: ('dc', 'vertex', 'step', 'heat'),
    PLANS: ('request_id', 'item_id', 'server_dc', 'bytes'),
    PLACEMENT_LOG: PlacementEntry.CSV_HEADER,
}

COMPARE_HEADER = ('metric', 'a', 'b', 'ratio')


def fmt(value) -> str:
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(directory, name, rows: Iterable[Sequence]) -> Path:
    path = Path(directory) / name
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(HEADERS[name])
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.debug("Wrote %s", path)
    return path


def write_text(directory, name, text) -> Path:
    path = Path(directory) / name
    path.write_text(text, encoding='utf-8')
    return path


def read_csv(directory, name) -> List[Dict[str, str]]:
    path = Path(directory) / name
    if not path.is_file():
        raise ReportSchemaError(f"{path}: report file missing")
    with open(path, newline='', encoding='utf-8') as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(HEADERS[name]):
            raise ReportSchemaError(f"{path}: unexpected columns {reader.fieldnames}")
        return list(reader)


def summarize(directory) -> Dict[str, float]:
    """Headline metrics of one report directory."""
    costs = read_csv(directory, COSTS)
    if len(costs) != 1:
        raise ReportSchemaError(f"{directory}: {COSTS} must hold one row")
    summary = {name: float(costs[0][name]) for name in HEADERS[COSTS]}

    latencies = [float(row['latency_ms']) for row in read_csv(directory, LATENCY)]
    summary['mean_latency_ms'] = sum(latencies) / len(latencies) if latencies else 0.0
    summary['wan_bytes'] = float(sum(int(row['total_bytes']) for row in read_csv(directory, WAN)))

    total = [row for row in read_csv(directory, MIGRATION) if row['request_id'] == 'all']
    if total:
        summary['migration_ratio'] = float(total[0]['migration_ratio'])
    return summary


def ratio(a, b) -> float:
    if a == 0:
        return 1.0 if b == 0 else math.inf
    return b / a


def compare_values(a: Dict[str, float], b: Dict[str, float]) -> List[tuple]:
    """``(metric, a, b, b / a)`` for every metric both sides report."""
    if set(a) != set(b):
        missing = sorted(set(a) ^ set(b))
        raise ReportSchemaError(f"reports differ in metrics: {', '.join(missing)}")
    return [(metric, a[metric], b[metric], ratio(a[metric], b[metric])) for metric in a]


def compare(directory_a, directory_b) -> List[tuple]:
    """Metrics of report B normalized to report A."""
    return compare_values(summarize(directory_a), summarize(directory_b))


def format_table(rows) -> str:
    lines = [','.join(COMPARE_HEADER)]
    for metric, a, b, r in rows:
        lines.append(','.join([metric, fmt(float(a)), fmt(float(b)), fmt(float(r))]))
    return '\n'.join(lines) + '\n'
