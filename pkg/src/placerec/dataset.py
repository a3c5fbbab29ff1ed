"""Dataset manifest, geographic poses, and the VPRF binary feature format.

The manifest is UTF-8 line-delimited JSON, one image record per line with
keys ``id``, ``path``, ``split`` ("query" | "reference") and ``pose``.
Per-image features travel in ``.vprf`` files (one per image, named
``<id>.vprf``), a little-endian binary container holding the extractor's
CLS token and the full patch-token matrix as 32-bit floats.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

VPRF_MAGIC = b"VPRF"
VPRF_VERSION = 1
_FLAG_CLS_PRESENT = 0x01

POSE_KINDS = ("utm", "wgs84")
SPLITS = ("query", "reference")


class ManifestError(ValueError):
    """Malformed or internally inconsistent manifest."""


class FeatureFileError(ValueError):
    """Malformed VPRF feature file."""


@dataclass(frozen=True)
class Pose:
    """Geographic pose: planar UTM meters or WGS84 degrees.

    ``x``/``y`` hold (easting, northing) for ``utm`` and (lat, lon) for
    ``wgs84``. All poses within one manifest must share the same kind.
    """

    kind: str
    x: float
    y: float

    def __post_init__(self) -> None:
        if self.kind not in POSE_KINDS:
            raise ManifestError(f"unknown pose kind {self.kind!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ManifestError("pose coordinates must be finite")
        if self.kind == "wgs84":
            if not -90.0 <= self.x <= 90.0 or not -180.0 <= self.y <= 180.0:
                raise ManifestError("pose out of bounds")

    @classmethod
    def utm(cls, easting: float, northing: float) -> "Pose":
        return cls("utm", float(easting), float(northing))

    @classmethod
    def wgs84(cls, lat: float, lon: float) -> "Pose":
        return cls("wgs84", float(lat), float(lon))

    def to_json(self) -> dict:
        if self.kind == "utm":
            return {"kind": "utm", "easting": self.x, "northing": self.y}
        return {"kind": "wgs84", "lat": self.x, "lon": self.y}

    @classmethod
    def from_json(cls, obj: dict) -> "Pose":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ManifestError("pose must be an object with a 'kind' key")
        kind = obj["kind"]
        if kind == "utm":
            return cls.utm(obj["easting"], obj["northing"])
        if kind == "wgs84":
            return cls.wgs84(obj["lat"], obj["lon"])
        raise ManifestError(f"unknown pose kind {kind!r}")


@dataclass(frozen=True)
class ImageRecord:
    """One manifest entry: image identity, file location, split, and pose."""

    id: str
    path: str
    split: str
    pose: Pose

    def __post_init__(self) -> None:
        if not self.id:
            raise ManifestError("record id must be nonempty")
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "split": self.split,
            "pose": self.pose.to_json(),
        }


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Per-image extractor output: CLS vector plus the N x D patch matrix.

    Immutable after construction; safe to share across threads.
    """

    image_id: str
    cls: np.ndarray
    patches: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "cls", np.asarray(self.cls, dtype=np.float32))
        object.__setattr__(self, "patches", np.asarray(self.patches, dtype=np.float32))
        if not self.image_id:
            raise FeatureFileError("image_id must be nonempty")
        if self.cls.ndim != 1 or self.cls.shape[0] < 1:
            raise FeatureFileError("cls must be a vector with dim >= 1")
        if self.patches.ndim != 2 or self.patches.shape[0] < 1:
            raise FeatureFileError("patches must be an N x D matrix with N >= 1")
        if self.patches.shape[1] != self.cls.shape[0]:
            raise FeatureFileError(
                f"patch dim {self.patches.shape[1]} != cls dim {self.cls.shape[0]}"
            )
        if not np.all(np.isfinite(self.cls)) or not np.all(np.isfinite(self.patches)):
            raise FeatureFileError("feature values must be finite")

    @property
    def dim(self) -> int:
        return int(self.cls.shape[0])

    @property
    def n_patches(self) -> int:
        return int(self.patches.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.cls.tobytes() == other.cls.tobytes()
            and self.patches.shape == other.patches.shape
            and self.patches.tobytes() == other.patches.tobytes()
        )


def load_manifest(path: str | Path) -> list[ImageRecord]:
    """Load a line-delimited JSON manifest, validating ids and poses.

    Records come back in file order. Rejects duplicate ids, out-of-bounds
    or non-finite poses, and manifests mixing UTM with WGS84 poses.
    """
    records: list[ImageRecord] = []
    seen: set[str] = set()
    pose_kind: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed manifest line {lineno}: {exc}") from exc
            try:
                record = ImageRecord(
                    id=str(obj["id"]),
                    path=str(obj["path"]),
                    split=str(obj["split"]),
                    pose=Pose.from_json(obj["pose"]),
                )
            except ManifestError as exc:
                raise ManifestError(f"{exc}, line {lineno}") from exc
            except (KeyError, TypeError) as exc:
                raise ManifestError(f"malformed manifest line {lineno}: {exc}") from exc
            if record.id in seen:
                raise ManifestError(f"duplicate id {record.id!r}, line {lineno}")
            seen.add(record.id)
            if pose_kind is None:
                pose_kind = record.pose.kind
            elif record.pose.kind != pose_kind:
                raise ManifestError(
                    f"mixed pose kinds ({pose_kind!r} vs {record.pose.kind!r}), line {lineno}"
                )
            records.append(record)
    return records


def save_manifest(records: list[ImageRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json()) + "\n")


def feature_path(features_dir: str | Path, image_id: str) -> Path:
    """Keyed lookup: one ``<id>.vprf`` file per image inside the features dir."""
    return Path(features_dir) / f"{image_id}.vprf"


def write_feature_file(fs: FeatureSet, path: str | Path) -> None:
    """Serialize a FeatureSet to VPRF bytes; deterministic for equal inputs.

    Layout (little-endian): magic ``VPRF``, version u16, flags u8 (bit0 =
    CLS present), id_len u16 + id UTF-8 bytes, dim u32, n_patches u32,
    dim f32 CLS values, then n_patches x dim f32 patch values row-major.
    """
    ident = fs.image_id.encode("utf-8")
    if len(ident) > 0xFFFF:
        raise FeatureFileError("image id too long for VPRF id_len field")
    parts = [
        VPRF_MAGIC,
        struct.pack("<H", VPRF_VERSION),
        struct.pack("<B", _FLAG_CLS_PRESENT),
        struct.pack("<H", len(ident)),
        ident,
        struct.pack("<I", fs.dim),
        struct.pack("<I", fs.n_patches),
        np.ascontiguousarray(fs.cls, dtype="<f4").tobytes(),
        np.ascontiguousarray(fs.patches, dtype="<f4").tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_feature_file(path: str | Path) -> FeatureSet:
    """Parse a VPRF file back into a FeatureSet with the exact stored values."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(offset: int, count: int) -> bytes:
        if offset + count > len(data):
            raise FeatureFileError(
                f"truncated payload: expected at least {offset + count} bytes, got {len(data)}"
            )
        return data[offset : offset + count]

    if need(0, 4) != VPRF_MAGIC:
        raise FeatureFileError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack("<H", need(4, 2))
    if version != VPRF_VERSION:
        raise FeatureFileError(f"version mismatch: got {version}, expected {VPRF_VERSION}")
    (flags,) = struct.unpack("<B", need(6, 1))
    if flags != _FLAG_CLS_PRESENT:
        raise FeatureFileError(f"unsupported flags 0x{flags:02x}")
    (id_len,) = struct.unpack("<H", need(7, 2))
    offset = 9
    try:
        image_id = need(offset, id_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FeatureFileError(f"image id is not valid UTF-8: {exc}") from exc
    offset += id_len
    dim, n_patches = struct.unpack("<II", need(offset, 8))
    offset += 8
    if dim < 1 or n_patches < 1:
        raise FeatureFileError(f"invalid dimensions dim={dim} n_patches={n_patches}")
    cls = np.frombuffer(need(offset, 4 * dim), dtype="<f4").copy()
    offset += 4 * dim
    patches_bytes = need(offset, 4 * dim * n_patches)
    patches = np.frombuffer(patches_bytes, dtype="<f4").reshape(n_patches, dim).copy()
    offset += 4 * dim * n_patches
    if offset != len(data):
        raise FeatureFileError(
            f"trailing bytes: expected {offset} bytes total, got {len(data)}"
        )
    return FeatureSet(image_id=image_id, cls=cls, patches=patches)
