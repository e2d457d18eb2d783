"""Binary containers, delimited output, and content hashing.

One container format serves every artifact family (noise batches, trajectory
datasets, model checkpoints, map/tensor stacks):

    magic "NMQD" | u16 version | u32 header length | header JSON (utf-8)
    | little-endian f64 payload

Complex arrays are stored as interleaved (re, im) pairs.  The header carries
a "kind" tag, the record geometry, and any stage-specific metadata, so a file
is self-describing and hash-stable.  CSV output prefixes metadata lines with
'#' ahead of the column header.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError, ShapeError

__all__ = [
    "MAGIC",
    "VERSION",
    "write_container",
    "read_container",
    "write_csv",
    "read_csv",
    "file_hash",
]

MAGIC = b"NMQD"
VERSION = 1


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def write_container(path, kind: str, header: dict, arrays) -> None:
    """Write records to an "NMQD" container.

    ``arrays`` is a sequence of equally-shaped numpy arrays (or one stacked
    array); complex input is flattened to interleaved (re, im) f64.  The
    header must be JSON-serializable and is stored augmented with the record
    geometry under the "records" key.
    """
    if isinstance(arrays, np.ndarray):
        arrays = list(arrays) if arrays.ndim > 1 else [arrays]
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ShapeError("container records must share one shape")
    shape = arrays[0].shape if arrays else ()
    is_complex = bool(arrays) and np.iscomplexobj(arrays[0])
    full = dict(header)
    full["kind"] = kind
    full["records"] = {
        "count": len(arrays),
        "shape": list(shape),
        "complex": is_complex,
    }
    blob = _canonical_json(full)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            if is_complex:
                flat = np.empty(2 * a.size, dtype="<f8")
                flat[0::2] = a.real.ravel()
                flat[1::2] = a.imag.ravel()
            else:
                flat = np.ascontiguousarray(a, dtype="<f8").ravel()
            fh.write(flat.tobytes())


def read_container(path, expect_kind: str | None = None):
    """Read an "NMQD" container; returns (header, records array).

    Records come back stacked as [count, *shape], complex if written so.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        try:
            header = json.loads(fh.read(hlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: corrupt header ({exc})") from exc
        rec = header.get("records")
        if rec is None:
            raise FileFormatError(f"{path}: header lacks record geometry")
        if expect_kind is not None and header.get("kind") != expect_kind:
            raise FileFormatError(
                f"{path}: kind {header.get('kind')!r}, expected {expect_kind!r}")
        count = int(rec["count"])
        shape = tuple(rec["shape"])
        per = int(np.prod(shape, dtype=np.int64)) if shape else 1
        width = 2 * per if rec["complex"] else per
        raw = np.frombuffer(fh.read(count * width * 8), dtype="<f8")
        if raw.size != count * width:
            raise FileFormatError(f"{path}: truncated payload")
    if rec["complex"]:
        data = (raw[0::2] + 1j * raw[1::2]).reshape((count,) + shape)
    else:
        data = raw.reshape((count,) + shape)
    return header, data


def write_csv(path, columns: dict, metadata: dict | None = None,
              fmt: str = "%.12g") -> None:
    """Delimited output: '#'-prefixed metadata lines, column header, rows."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) != 1:
        raise ShapeError("CSV columns must share one length")
    with open(path, "w") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key} = {json.dumps(value)}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(fmt % v for v in row) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`; returns (columns dict, metadata dict)."""
    metadata = {}
    names = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    try:
                        metadata[key.strip()] = json.loads(value.strip())
                    except json.JSONDecodeError:
                        metadata[key.strip()] = value.strip()
                continue
            if names is None:
                names = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    if names is None:
        raise FileFormatError(f"{path}: no column header")
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {n: data[:, i] for i, n in enumerate(names)}, metadata


def file_hash(path) -> str:
    """sha256 of the file contents, hex-encoded."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
