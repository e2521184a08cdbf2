"""CKP1 checkpoint files.

Layout (all integers little-endian):

    magic   "CKP1"
    u16     format version (currently 1)
    u32     config text length, then the UTF-8 config echo
    u32     blob count
    per blob, sorted by name:
        u16     name length, then the UTF-8 name
        u8      ndim
        u32[ndim] dims
        f32[*]  row-major data

Blobs are stored as float32 regardless of the run dtype; a float64 store
round-trips byte-identically because the downcast is idempotent.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import Config
from .errors import FormatError, ShapeMismatchError
from .nn.params import ParameterStore

MAGIC = b"CKP1"
VERSION = 1


def save_checkpoint(path: str, store: ParameterStore, cfg: Config) -> None:
    arrays = store.state_arrays()
    text = cfg.as_text().encode("utf-8")
    parts = [MAGIC, struct.pack("<H", VERSION),
             struct.pack("<I", len(text)), text,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f4")
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as f:
        f.write(blob)


def _take(buf: bytes, pos: int, n: int, what: str) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise FormatError(f"truncated checkpoint: ran out of bytes in {what}")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path: str) -> tuple[Config, dict[str, np.ndarray]]:
    """Read a CKP1 file into (embedded config, {name: float32 array})."""
    with open(path, "rb") as f:
        buf = f.read()
    raw, pos = _take(buf, 0, 4, "magic")
    if raw != MAGIC:
        raise FormatError(f"{path}: not a CKP1 checkpoint")
    raw, pos = _take(buf, pos, 2, "version")
    version = struct.unpack("<H", raw)[0]
    if version != VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {VERSION}")
    raw, pos = _take(buf, pos, 4, "config length")
    raw, pos = _take(buf, pos, struct.unpack("<I", raw)[0], "config text")
    cfg = Config.from_text(raw.decode("utf-8"))
    raw, pos = _take(buf, pos, 4, "blob count")
    count = struct.unpack("<I", raw)[0]
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, pos = _take(buf, pos, 2, "name length")
        raw, pos = _take(buf, pos, struct.unpack("<H", raw)[0], "blob name")
        name = raw.decode("utf-8")
        raw, pos = _take(buf, pos, 1, "rank")
        ndim = raw[0]
        raw, pos = _take(buf, pos, 4 * ndim, "dims")
        shape = struct.unpack(f"<{ndim}I", raw)
        size = int(np.prod(shape)) if ndim else 1
        raw, pos = _take(buf, pos, 4 * size, f"data of '{name}'")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes after last blob")
    return cfg, arrays


def restore(store: ParameterStore, arrays: dict[str, np.ndarray]) -> None:
    """Load checkpoint arrays into a store built for a (hopefully) matching config.

    Every store entry must be present and every shape must agree; the error
    names the first offending parameter so config mismatches are diagnosable.
    """
    missing = sorted(set(store.state_arrays()) - set(arrays))
    if missing:
        raise ShapeMismatchError(
            f"checkpoint has no entry for '{missing[0].partition('/')[2]}' "
            f"({len(missing)} missing in total)")
    store.load_arrays(arrays)
