"""
CSV and JSON writers for result tables.

CSV files start with '#'-prefixed metadata lines (one `key: json-value`
line per entry) followed by the table in '%.17g' formatting, so the same
inputs always give the same bytes.
"""
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, TextIO

import numpy as np
import pandas as pd

from src.models.errors import ConfigError

FLOAT_FORMAT = '%.17g'


@dataclass
class ResultTable:
    """A table plus the run record it came from."""
    name: str
    frame: pd.DataFrame
    metadata: Dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, name: str, rows: List[dict], columns: List[str],
                  metadata: Optional[Dict] = None) -> 'ResultTable':
        """Rows in the given order; an empty row list gives a header-only table."""
        frame = pd.DataFrame(rows, columns=columns)
        return cls(name=name, frame=frame, metadata=dict(metadata or {}))


def _plain(value):
    """JSON-safe scalars: numpy types unwrapped, non-finite floats as strings."""
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def canonical_json(data, indent: Optional[int] = None) -> str:
    """Key-sorted JSON with finite floats in repr form."""
    return json.dumps(_plain(data), sort_keys=True, indent=indent, ensure_ascii=False)


def flatten_for_table(frame: pd.DataFrame) -> pd.DataFrame:
    """List cells (site coordinates) become space-separated strings."""
    flat = frame.copy()
    for column in flat.columns:
        if flat[column].map(lambda v: isinstance(v, (list, tuple))).any():
            flat[column] = flat[column].map(
                lambda v: ' '.join(str(c) for c in v) if isinstance(v, (list, tuple)) else v
            )
    return flat


class TableExporter:
    """Write a ResultTable as CSV or JSON to a path or a stream."""

    def __init__(self, table: ResultTable):
        self.table = table

    def to_csv_text(self) -> str:
        header = ''.join(f"# {key}: {canonical_json(value)}\n" for key, value in self.table.metadata.items())
        body = flatten_for_table(self.table.frame).to_csv(index=False, float_format=FLOAT_FORMAT,
                                                          lineterminator='\n')
        return header + body

    def to_json_text(self) -> str:
        document = {
            'metadata': self.table.metadata,
            'rows': self.table.frame.to_dict(orient='records'),
        }
        return canonical_json(document, indent=2) + '\n'

    def export(self, output_path: Optional[str] = None, fmt: str = 'csv', stream: TextIO = None):
        """
        Args:
            output_path: file to write; stdout (or `stream`) when None
            fmt: 'csv', 'json' or 'xlsx' (xlsx needs output_path)
        """
        if fmt == 'xlsx':
            from src.exporters.excel_exporter import export_to_excel
            if output_path is None:
                raise ConfigError("xlsx output needs --out")
            export_to_excel(self.table, output_path)
            return
        text = self.to_json_text() if fmt == 'json' else self.to_csv_text()
        if output_path is None:
            (stream or sys.stdout).write(text)
            return
        Path(output_path).write_text(text, encoding='utf-8')


def write_sidecar(output_path: str, metadata: Dict) -> Path:
    """<output>.meta.json next to the table."""
    path = Path(f"{output_path}.meta.json")
    path.write_text(canonical_json(metadata, indent=2) + '\n', encoding='utf-8')
    return path


def write_effective_dump(directory: str, scale: int, effective) -> List[Path]:
    """
    One CSV per coalescence class at one scale with (φ, Z_∅, Z_o, Z_x, Z_ox,
    log_norm) along the first field axis.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for Z in effective:
        path = directory / f"effective_jox{Z.jox}_scale{scale}.csv"
        pd.DataFrame(Z.components()).to_csv(path, index=False, float_format=FLOAT_FORMAT,
                                             lineterminator='\n')
        written.append(path)
    return written


def export_document(document: Dict, output_path: Optional[str] = None, stream: TextIO = None):
    """A single JSON record (no table) to a file or stdout."""
    text = canonical_json(document, indent=2) + '\n'
    if output_path is None:
        (stream or sys.stdout).write(text)
        return
    Path(output_path).write_text(text, encoding='utf-8')
