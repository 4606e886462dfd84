"""Artifact output: CSV and JSON files tracked by a run manifest."""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import _jsonable

__all__ = ["ArtifactWriter", "versions", "format_float"]


def format_float(v: Any) -> Any:
    """Shortest round-trip text for floats; other values pass through."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def versions() -> dict[str, str]:
    import scipy

    from . import __version__
    return {"mfgdual": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class ArtifactWriter:
    """Writes files into one output directory and remembers what it wrote."""

    def __init__(self, out_dir: str | Path) -> None:
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _track(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.root / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._track(name)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_float(v) for v in row])
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._track(name)
        path.write_text(text)
        return path

    def write_json(self, name: str, obj: Any) -> Path:
        return self.write_text(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def write_manifest(self, payload: dict[str, Any]) -> Path:
        """``manifest.json`` listing every file written so far (itself included)."""
        self._track("manifest.json")
        return self.write_json("manifest.json", payload | {"files": list(self.files)})
