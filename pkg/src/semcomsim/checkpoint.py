"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"CSCM" | u16 version | u16 section count
    per section:
        u16 name length | name (utf-8) | u32 body length | body | u32 crc32(body)
    section body: u32 record count, then per record
        u16 name length | name | u8 kind | u8 ndim | u32 dims[ndim] | u32 payload length | payload

Kind 0 payloads are float32 arrays, kind 1 payloads are utf-8 JSON. Weights
are trained in float64 and stored as float32; that rounding is the one lossy
boundary in the format.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"CSCM"
VERSION = 1
KIND_F32 = 0
KIND_JSON = 1


class CheckpointError(Exception):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _section_body(records: dict) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", len(records)))
    for name, value in records.items():
        out.write(_pack_str(name))
        if isinstance(value, np.ndarray):
            arr = np.asarray(value, dtype="<f4")
            payload = arr.tobytes(order="C")
            out.write(struct.pack("<BB", KIND_F32, arr.ndim))
            out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        else:
            payload = json.dumps(value, sort_keys=True).encode("utf-8")
            out.write(struct.pack("<BB", KIND_JSON, 0))
        out.write(struct.pack("<I", len(payload)))
        out.write(payload)
    return out.getvalue()


def save_checkpoint(path, sections: dict) -> None:
    """``sections``: {section name: {record name: ndarray | JSON-able value}}."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", VERSION, len(sections)))
    for name, records in sections.items():
        body = _section_body(records)
        buf.write(_pack_str(name))
        buf.write(struct.pack("<I", len(body)))
        buf.write(body)
        buf.write(struct.pack("<I", zlib.crc32(body)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, where: str):
        self.data, self.pos, self.where = data, 0, where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.where}: truncated")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def _parse_body(body: bytes, section: str) -> dict:
    r = _Reader(body, f"section {section!r}")
    (count,) = r.unpack("<I")
    records = {}
    for _ in range(count):
        name = r.string()
        kind, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        (n,) = r.unpack("<I")
        payload = r.take(n)
        if kind == KIND_F32:
            arr = np.frombuffer(payload, dtype="<f4")
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise CheckpointError(f"record {section}/{name}: payload does not match shape {list(shape)}")
            records[name] = arr.reshape(shape).astype(np.float64)
        elif kind == KIND_JSON:
            records[name] = json.loads(payload.decode("utf-8"))
        else:
            raise CheckpointError(f"record {section}/{name}: unknown kind {kind}")
    return records


def load_checkpoint(path) -> dict:
    path = Path(path)
    data = path.read_bytes()
    r = _Reader(data, str(path))
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, count = r.unpack("<HH")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    sections = {}
    for _ in range(count):
        name = r.string()
        (n,) = r.unpack("<I")
        body = r.take(n)
        (crc,) = r.unpack("<I")
        if zlib.crc32(body) != crc:
            raise CheckpointError(f"{path}: checksum mismatch in section {name!r}")
        sections[name] = _parse_body(body, name)
    return sections


def round_to_storage(state: dict) -> dict:
    """What a state dict looks like after a save/load cycle."""
    return {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in state.items()}
