"""
Report writer - JSON and CSV rendering with provenance, written atomically
"""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Sequence, Union

import numpy as np

from src.core.errors import UsageError


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; inf becomes "inf"/"-inf" and NaN becomes None"""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


def render_json(payload: Mapping[str, Any], meta: Mapping[str, Any]) -> str:
    document = dict(to_jsonable(payload))
    document["meta"] = to_jsonable(meta)
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def format_cell(value: Any) -> str:
    """CSV cell: 17 significant digits for floats, lower-case booleans, empty for None"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def meta_comments(meta: Mapping[str, Any]) -> str:
    """Provenance as `# key=value` lines; YAML, CSV and gnuplot all read them as comments"""
    return "".join(f"# {key}={meta[key]}\n" for key in sorted(meta))


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], meta: Mapping[str, Any]) -> str:
    buffer = io.StringIO()
    buffer.write(meta_comments(meta))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise UsageError(f"CSV row has {len(row)} cells, header has {len(header)}")
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def atomic_write(path: Union[str, Path], text: str) -> Path:
    """
    Write text to path through a temporary file in the same directory

    Args:
        path: Destination file
        text: Content

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class ReportWriter:
    """Writes the files of one run into out_dir with the run's provenance"""

    def __init__(self, out_dir: Union[str, Path], meta: Mapping[str, Any]):
        self.out_dir = Path(out_dir)
        self.meta = dict(meta)
        self.written: List[Path] = []

    def json(self, stem: str, payload: Mapping[str, Any]) -> Path:
        path = atomic_write(self.out_dir / f"{stem}.json", render_json(payload, self.meta))
        self.written.append(path)
        return path

    def csv(self, stem: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = atomic_write(self.out_dir / f"{stem}.csv", render_csv(header, rows, self.meta))
        self.written.append(path)
        return path

    def text(self, name: str, content: str) -> Path:
        """Plain-text file (YAML, gnuplot) headed by the provenance comment lines"""
        path = atomic_write(self.out_dir / name, meta_comments(self.meta) + content)
        self.written.append(path)
        return path
