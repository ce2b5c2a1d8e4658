"""Tensor container: text key-value header + raw little-endian f64 payload.

Layout:

    DOATENSORS
    format_version 1
    meta <key> <json-encoded value>     (zero or more)
    tensor <name> <d0,d1,...> <byte offset>
    ...
    end
    <payload bytes>

Offsets are relative to the first byte after the "end" line. Tensors are
row-major float64, little-endian. A 0-d shape is written as "-".
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"DOATENSORS"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """File is not a valid tensor container."""


class CheckpointVersionError(CheckpointFormatError):
    """Container format version is not supported."""


def _shape_str(shape):
    return ",".join(str(d) for d in shape) if shape else "-"


def _parse_shape(s):
    return () if s == "-" else tuple(int(d) for d in s.split(","))


def save_tensors(path, tensors: dict, meta: dict | None = None):
    """Write {name: array} with optional string-keyed metadata."""
    names = list(tensors)
    arrays = {n: np.ascontiguousarray(tensors[n], dtype="<f8") for n in names}
    lines = [MAGIC.decode(), f"format_version {FORMAT_VERSION}"]
    for key, value in (meta or {}).items():
        if " " in key:
            raise ValueError(f"meta key may not contain spaces: {key!r}")
        lines.append(f"meta {key} {json.dumps(value)}")
    offset = 0
    for n in names:
        if " " in n or "\n" in n:
            raise ValueError(f"tensor name may not contain whitespace: {n!r}")
        lines.append(f"tensor {n} {_shape_str(arrays[n].shape)} {offset}")
        offset += arrays[n].nbytes
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for n in names:
            fh.write(arrays[n].tobytes())


def load_tensors(path):
    """Read a container; returns (tensors: {name: array}, meta: dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointFormatError(f"{path}: bad magic, not a tensor container")
    try:
        header_end = blob.index(b"\nend\n")
    except ValueError:
        raise CheckpointFormatError(f"{path}: missing end marker")
    header = blob[: header_end + 1].decode("ascii")
    payload = blob[header_end + len(b"\nend\n") :]
    meta = {}
    entries = []
    version = None
    for line in header.splitlines()[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "format_version":
            version = int(rest)
        elif kind == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = json.loads(value)
        elif kind == "tensor":
            name, shape_s, off_s = rest.split(" ")
            entries.append((name, _parse_shape(shape_s), int(off_s)))
        else:
            raise CheckpointFormatError(f"{path}: unknown header line {line!r}")
    if version is None:
        raise CheckpointFormatError(f"{path}: missing format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format_version {version} unsupported (expected {FORMAT_VERSION})"
        )
    tensors = {}
    for name, shape, off in entries:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
        tensors[name] = arr.reshape(shape).astype(np.float64)
    return tensors, meta
