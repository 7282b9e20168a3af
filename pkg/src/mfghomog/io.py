"""JSON and CSV writers with provenance headers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CSV_FORMAT = "%.17e"


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def write_csv(path, columns: dict, config_hash: str | None = None) -> Path:
    """Columns of equal length; full double precision.

    A leading ``# config_hash=...`` comment line records provenance.
    """
    path = Path(path)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float).reshape(-1) for k in names])
    header = ",".join(names)
    if config_hash is not None:
        header = f"# config_hash={config_hash}\n" + header
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=CSV_FORMAT)
    return path


def read_csv(path) -> tuple[dict, str | None]:
    """Inverse of :func:`write_csv`: ``(columns, config_hash)``."""
    lines = Path(path).read_text().splitlines()
    chash = None
    if lines and lines[0].startswith("# config_hash="):
        chash = lines[0].split("=", 1)[1].strip()
        lines = lines[1:]
    names = lines[0].split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return {k: data[:, i] for i, k in enumerate(names)}, chash
