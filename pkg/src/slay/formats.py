"""On-disk formats: the SLAY binary tensor file and commented CSV tables.

Tensor layout (little-endian)::

    b"SLAY" | u32 version=1 | u32 rows | u32 cols | u8 dtype (0=f64, 1=f32) | row-major payload
"""

from __future__ import annotations

import csv
import io
import json
import struct
import sys
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import TensorFormatError

MAGIC = b"SLAY"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}


def encode_tensor(a: np.ndarray, dtype=None) -> bytes:
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise TensorFormatError(f"only 2-D tensors can be written, got shape {a.shape}")
    dt = np.dtype(dtype) if dtype is not None else a.dtype
    if dt not in _CODES:
        dt = np.dtype("float64")
    code = _CODES[dt]
    payload = np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes()
    return _HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1], code) + payload


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TensorFormatError(f"truncated header ({len(buf)} bytes)")
    magic, version, rows, cols, code = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    expected = rows * cols * dt.itemsize
    payload = buf[_HEADER.size:]
    if len(payload) != expected:
        raise TensorFormatError(f"payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dt).reshape(rows, cols).astype(dt.newbyteorder("="))


def write_tensor(path, a: np.ndarray, dtype=None) -> None:
    try:
        Path(path).write_bytes(encode_tensor(a, dtype))
    except OSError as exc:
        raise TensorFormatError(f"cannot write {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"cannot read {path}: {exc}") from exc
    try:
        return decode_tensor(buf)
    except TensorFormatError as exc:
        raise TensorFormatError(f"{path}: {exc}") from None


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return "NA"
    return str(value)


def format_csv(rows: Iterable[Mapping], columns: Sequence[str], config: Mapping | None = None) -> str:
    """CSV text with an optional ``# json-config:`` first line.

    Floats use ``repr`` so values round-trip exactly.
    """
    out = io.StringIO()
    if config is not None:
        out.write("# json-config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return out.getvalue()


def emit_csv(text: str, out: str | Path | IO | None = None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    elif hasattr(out, "write"):
        out.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise TensorFormatError(f"cannot write {out}: {exc}") from exc


def read_csv(text: str) -> tuple[dict | None, list[dict]]:
    """Parse text written by :func:`format_csv` back into (config, rows of strings)."""
    lines = text.splitlines()
    config = None
    if lines and lines[0].startswith("# json-config: "):
        config = json.loads(lines[0][len("# json-config: "):])
        lines = lines[1:]
    lines = [ln for ln in lines if not ln.startswith("#")]
    return config, list(csv.DictReader(lines))
