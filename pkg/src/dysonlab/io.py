"""Binary dumps, CSV tables and JSON helpers."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

DUMP_MAGIC = b"DYEX"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIIdq")
CSV_LIMIT = 12


def write_dump(path, values: np.ndarray, n: int, beta: float, mask_id: int) -> Path:
    """Write ``2**n`` little-endian doubles after the DYEX header."""
    values = np.ascontiguousarray(values, dtype="<f8").reshape(-1)
    if values.size != 1 << n:
        raise ValueError(f"expected {1 << n} values for n={n}, got {values.size}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, n, float(beta), int(mask_id)))
        fh.write(values.tobytes())
    return path


def read_dump(path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    magic, version, n, beta, mask_id = _HEADER.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise ValueError("not a DYEX dump")
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.size != 1 << n:
        raise ValueError("truncated dump")
    return {"version": version, "n": n, "beta": beta, "mask_id": mask_id}, values.copy()


def dump_measure(path, m) -> Path:
    return write_dump(path, m.probabilities, m.n, m.beta, m.mask_id)


def write_table_csv(path, values: np.ndarray, n: int, start: int = 0,
                    column: str = "value") -> Path:
    """One row per configuration: the spins of sites ``start..start+n-1`` then the value."""
    if n > CSV_LIMIT:
        raise ValueError(f"CSV export is limited to {CSV_LIMIT} sites")
    values = np.asarray(values).reshape(-1)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *(f"s{start + t}" for t in range(n)), column])
        for idx, v in enumerate(values):
            w.writerow([idx, *((1 if (idx >> t) & 1 else -1) for t in range(n)), repr(float(v))])
    return path


def write_rows_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(json.loads(json.dumps(obj, default=_default))), indent=2,
                      sort_keys=True, allow_nan=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path) -> str:
    return digest_bytes(Path(path).read_bytes())


def digest_obj(obj) -> str:
    return digest_bytes(json.dumps(obj, sort_keys=True, default=_default).encode())
