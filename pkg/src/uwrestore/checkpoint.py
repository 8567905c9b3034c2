"""Single-file checkpoint archives: tag, sha256 of the payload, length, payload."""

from __future__ import annotations

import hashlib
import io
import os
import struct
from pathlib import Path

import torch

_HEADER = struct.Struct("<4s32sQ")


class CheckpointError(RuntimeError):
    pass


def save_archive(path, tag: bytes, payload: dict) -> None:
    if len(tag) != 4:
        raise ValueError("tag must be 4 bytes")
    buf = io.BytesIO()
    torch.save(payload, buf)
    body = buf.getvalue()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(tag, hashlib.sha256(body).digest(), len(body)))
        fh.write(body)
    os.replace(tmp, path)


def load_archive(path, tag: bytes) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    found, digest, length = _HEADER.unpack_from(raw)
    if found != tag:
        raise CheckpointError(f"{path}: version tag {found!r} does not match expected {tag!r}")
    body = raw[_HEADER.size :]
    if len(body) != length:
        raise CheckpointError(f"{path}: checksum error, payload is {len(body)} bytes, header says {length}")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum error, payload sha256 mismatch")
    return torch.load(io.BytesIO(body), map_location="cpu", weights_only=True)
