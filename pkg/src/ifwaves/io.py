"""Deterministic serialization of records and experiment bundles.

CSV floats are written with repr-faithful formatting so identical runs
produce byte-identical files; the bundle manifest carries checksums and a
timestamp (the only non-reproducible field).
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

__all__ = [
    "format_float",
    "write_csv",
    "write_json",
    "read_json",
    "sha256_file",
    "write_manifest",
]

_VERSION = "0.1.0"


def format_float(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if not isinstance(v, str) else v for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, data):
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(out_dir, extra=None):
    out_dir = Path(out_dir)
    files = sorted(f for f in out_dir.iterdir() if f.is_file() and f.name != "manifest.json")
    manifest = {
        "version": _VERSION,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "checksums": {f.name: sha256_file(f) for f in files},
    }
    if extra:
        manifest.update(extra)
    write_json(out_dir / "manifest.json", manifest)
    return manifest
