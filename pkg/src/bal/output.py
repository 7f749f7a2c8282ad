"""File writers: versioned CSV, JSON sidecars and the binary event log.

CSV layout::

    # bal-csv v1 schema=<name> config_hash=<sha256>
    col_a,col_b,...
    ...

Floats are written with ``repr`` so values round-trip exactly and files
are byte-stable across runs.

Event log layout (little-endian, no header, 11 bytes per record)::

    f64 time | u8 kind | u16 site

``kind`` follows :class:`bal.model.EventKind`; ``site`` is the 1-based
ladder index for hop and intrinsic-loss events and 0 otherwise.  An index
CSV lists, per trajectory, its seed, first record and record count.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "CSV_VERSION",
    "EVENT_RECORD",
    "write_csv",
    "read_csv",
    "write_json",
    "write_events",
    "read_events",
]

CSV_VERSION = 1
EVENT_RECORD = np.dtype([("t", "<f8"), ("kind", "u1"), ("site", "<u2")])  # packed, 11 bytes
assert EVENT_RECORD.itemsize == 11


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, schema: str, config_hash: str, header, rows) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# bal-csv v{CSV_VERSION} schema={schema} config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(meta, header, rows)``; ``meta`` holds the comment-line fields."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("# bal-csv"):
            raise ValueError(f"{path}: missing bal-csv version line")
        parts = first[2:].split()
        meta = {"format": parts[0], "version": parts[1]}
        meta.update(p.split("=", 1) for p in parts[2:])
        r = csv.reader(fh)
        header = next(r)
        return meta, header, [row for row in r]


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no NaN/inf; map them to null
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))),
                      indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_events(path, event_arrays) -> list[tuple[int, int]]:
    """Concatenate per-trajectory event arrays into one packed file.

    Returns ``(offset, count)`` per trajectory, in records.
    """
    index = []
    offset = 0
    with Path(path).open("wb") as fh:
        for ev in event_arrays:
            rec = np.empty(ev.size, dtype=EVENT_RECORD)
            rec["t"], rec["kind"], rec["site"] = ev["t"], ev["kind"], ev["site"]
            fh.write(rec.tobytes())
            index.append((offset, int(ev.size)))
            offset += int(ev.size)
    return index


def read_events(path, offset: int = 0, count: int | None = None) -> np.ndarray:
    return np.fromfile(path, dtype=EVENT_RECORD, count=-1 if count is None else count,
                       offset=offset * EVENT_RECORD.itemsize)
