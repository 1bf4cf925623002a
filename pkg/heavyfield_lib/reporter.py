"""
Report emission: long-format CSV rows, JSON summary and timing
"""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .errors import NumericalError
from .utils import format_float

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('experiment', 'width', 'eps', 'seed', 'time', 'metric', 'value')
CSV_FILE = 'results.csv'
SUMMARY_FILE = 'summary.json'
TIMING_FILE = 'timing.json'


@dataclass(frozen=True)
class Measurement:
    """One CSV row; width, eps, seed and time are blank for aggregate rows"""
    experiment: str
    metric: str
    value: float
    width: Optional[int] = None
    eps: Optional[float] = None
    seed: Optional[int] = None
    time: Optional[float] = None

    def cells(self):
        return [self.experiment, format_float(self.width), format_float(self.eps), format_float(self.seed),
                format_float(self.time), self.metric, format_float(self.value)]


def _finite_tree(value) -> bool:
    if isinstance(value, float):
        return math.isfinite(value)
    if isinstance(value, dict):
        return all(_finite_tree(v) for v in value.values())
    if isinstance(value, (list, tuple)):
        return all(_finite_tree(v) for v in value)
    return True


class Reporter:
    """Serializes every write for one experiment into its output directory"""

    def __init__(self, output_dir: Path, experiment: str):
        self.output_dir = Path(output_dir)
        self.experiment = experiment
        self.rows_written = 0
        self._file = None
        self._writer = None
        self._started = None

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False

    @property
    def csv_path(self) -> Path:
        return self.output_dir / CSV_FILE

    def open(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._started = time.perf_counter()
        self._file = open(self.csv_path, 'w', newline='')
        self._writer = csv.writer(self._file, lineterminator='\n')
        self._writer.writerow(CSV_COLUMNS)

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None

    def write(self, rows: Iterable[Measurement]):
        """Append rows and flush; a non-finite value aborts the run"""
        for row in rows:
            if not math.isfinite(row.value):
                self._file.flush()
                raise NumericalError(f"non-finite value for metric '{row.metric}'",
                                     tensor=f"width={row.width}, eps={row.eps}, seed={row.seed}")
            self._writer.writerow(row.cells())
            self.rows_written += 1
        self._file.flush()

    def summary(self, config: Dict[str, Any], status: str = 'ok', error: Optional[str] = None,
                results: Optional[Dict[str, Any]] = None):
        """summary.json is deterministic; wall time goes to timing.json"""
        body = {
            'experiment': self.experiment,
            'status': status,
            'config': config,
            'rows': self.rows_written,
            'results': results or {},
        }
        if error is not None:
            body['error'] = error
        if not _finite_tree(body['results']):
            raise NumericalError("summary contains non-finite values")
        with open(self.output_dir / SUMMARY_FILE, 'w') as f:
            json.dump(body, f, indent=2, sort_keys=True)
            f.write('\n')
        elapsed = time.perf_counter() - self._started if self._started is not None else 0.0
        with open(self.output_dir / TIMING_FILE, 'w') as f:
            json.dump({'wall_seconds': elapsed}, f, indent=2)
            f.write('\n')
        logger.info("wrote %d rows to %s", self.rows_written, self.csv_path)
