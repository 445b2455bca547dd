import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from django.conf import settings

logger = logging.getLogger('planning')

PLAN_HEADER = ('B', 'gamma', 'tokens_per_branch', 'accuracy', 'latency', 'bound', 'feasible')
PARETO_HEADER = ('T', 'B', 'gamma', 'accuracy', 'latency')
TRACE_HEADER = ('event', 'elapsed_s', 'branch', 'tokens', 'seq_len', 'bound')
SIM_HEADER = (
    'B', 'gamma', 'T', 'trials', 'seed', 'accuracy_estimate', 'std_error',
    'mean_tokens', 'mean_cycles', 'analytic_accuracy',
)
THROUGHPUT_HEADER = ('requests', 'branches', 'sequences', 'step_time', 'throughput', 'bound', 'over_capacity')

MANIFEST_NAME = 'manifest.json'


@dataclass
class RunManifest:
    """Everything needed to re-run one command bit-identically."""

    command: str
    scenario_path: str
    parameters: Dict = field(default_factory=dict)
    output_paths: List[str] = field(default_factory=list)
    tool_version: str = ''
    seed: int = 0

    def __post_init__(self):
        if not self.tool_version:
            self.tool_version = settings.TTSLAT['TOOL_VERSION']

    @classmethod
    def load(cls, path: str | Path) -> 'RunManifest':
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
        unknown = sorted(set(document) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValueError(f"{path}: unknown manifest field(s) {', '.join(unknown)}")
        return cls(**document)


def format_cell(value) -> str:
    """Full round-trip precision for floats, lowercase booleans, enum values."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ''
    return str(value)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
        count += 1
    path = atomic_write_text(path, buffer.getvalue())
    logger.info(f"CSV written | path={path} | rows={count}")
    return path


def write_json(path: str | Path, document) -> Path:
    text = json.dumps(document, indent=2, sort_keys=True) + '\n'
    return atomic_write_text(path, text)


def write_manifest(out_dir: str | Path, manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / MANIFEST_NAME, asdict(manifest))


def evaluation_row(evaluation) -> tuple:
    config = evaluation.config
    return (
        config.branches,
        config.draft_len,
        evaluation.tokens_per_branch,
        evaluation.predicted_accuracy,
        evaluation.wall_latency,
        evaluation.bound,
        evaluation.feasible,
    )


def write_search_trace(path: str | Path, evaluations) -> Path:
    return write_csv(path, PLAN_HEADER, (evaluation_row(e) for e in evaluations))


def write_frontier(path: str | Path, points) -> Path:
    rows = (
        (budget, e.config.branches, e.config.draft_len, e.predicted_accuracy, e.wall_latency)
        for budget, e in points
    )
    return write_csv(path, PARETO_HEADER, rows)


def write_timeline(path: str | Path, events) -> Path:
    rows = ((e.event, e.elapsed_s, e.branch, e.tokens, e.seq_len, e.bound) for e in events)
    return write_csv(path, TRACE_HEADER, rows)
