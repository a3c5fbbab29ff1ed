"""VPRF feature-file serialization (the pipeline's public byte layout).

Layout, all little-endian: magic ``VPRF``, version u16 = 1, flags u8
(bit0 = CLS present), id_len u16 + id UTF-8 bytes, dim u32, n_patches
u32, CLS vector as dim x f32, patch matrix as n_patches x dim x f32
row-major. Trailing bytes are an error.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"VPRF"
VERSION = 1
FLAG_CLS_PRESENT = 0x01


class VprfError(ValueError):
    """Malformed VPRF file or inconsistent feature arrays."""


def write_vprf(path: str | Path, image_id: str, cls: np.ndarray, patches: np.ndarray) -> None:
    cls = np.ascontiguousarray(cls, dtype="<f4")
    patches = np.ascontiguousarray(patches, dtype="<f4")
    if cls.ndim != 1 or patches.ndim != 2 or patches.shape[1] != cls.shape[0]:
        raise VprfError(f"inconsistent shapes cls={cls.shape} patches={patches.shape}")
    if cls.shape[0] < 1 or patches.shape[0] < 1:
        raise VprfError("dim and n_patches must be >= 1")
    ident = image_id.encode("utf-8")
    if not ident or len(ident) > 0xFFFF:
        raise VprfError(f"bad image id {image_id!r}")
    blob = b"".join(
        (
            MAGIC,
            struct.pack("<H", VERSION),
            struct.pack("<B", FLAG_CLS_PRESENT),
            struct.pack("<H", len(ident)),
            ident,
            struct.pack("<I", cls.shape[0]),
            struct.pack("<I", patches.shape[0]),
            cls.tobytes(),
            patches.tobytes(),
        )
    )
    Path(path).write_bytes(blob)


def read_vprf(path: str | Path) -> tuple[str, np.ndarray, np.ndarray]:
    """Parse a VPRF file; returns (image_id, cls, patches)."""
    data = Path(path).read_bytes()

    def need(offset: int, count: int) -> bytes:
        if offset + count > len(data):
            raise VprfError(
                f"truncated payload: expected at least {offset + count} bytes, got {len(data)}"
            )
        return data[offset : offset + count]

    if need(0, 4) != MAGIC:
        raise VprfError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack("<H", need(4, 2))
    if version != VERSION:
        raise VprfError(f"version mismatch: got {version}, expected {VERSION}")
    (flags,) = struct.unpack("<B", need(6, 1))
    if flags != FLAG_CLS_PRESENT:
        raise VprfError(f"unsupported flags 0x{flags:02x}")
    (id_len,) = struct.unpack("<H", need(7, 2))
    offset = 9
    image_id = need(offset, id_len).decode("utf-8")
    offset += id_len
    dim, n_patches = struct.unpack("<II", need(offset, 8))
    offset += 8
    cls = np.frombuffer(need(offset, 4 * dim), dtype="<f4").copy()
    offset += 4 * dim
    patches = np.frombuffer(need(offset, 4 * dim * n_patches), dtype="<f4").reshape(n_patches, dim).copy()
    offset += 4 * dim * n_patches
    if offset != len(data):
        raise VprfError(f"trailing bytes: expected {offset} bytes total, got {len(data)}")
    return image_id, cls, patches
