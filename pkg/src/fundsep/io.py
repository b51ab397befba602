"""CSV, plot-data and manifest writing. Output bytes depend only on the data."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__

__all__ = ["fmt", "write_csv", "write_plot_data", "file_digest", "RunManifest", "read_manifest"]


def fmt(x) -> str:
    """Shortest round-trip text for numbers; empty for None."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    try:
        return repr(float(x))
    except (TypeError, ValueError):
        return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_plot_data(path, columns, rows, comment=None) -> Path:
    """Whitespace-separated columns with a '#' header, readable by gnuplot."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(fmt(v) for v in row) + "\n")
    return path


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    tool_version: str = __version__
    command: str = ""
    outputs: dict = field(default_factory=dict)     # file name -> sha256

    def add(self, path):
        path = Path(path)
        self.outputs[path.name] = file_digest(path)

    def write(self, directory) -> Path:
        path = Path(directory) / f"{self.command}.manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def read_manifest(path) -> RunManifest:
    data = json.loads(Path(path).read_text())
    return RunManifest(**data)
