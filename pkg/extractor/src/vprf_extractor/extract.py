"""Batched feature extraction from a dataset manifest into VPRF files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .models import load_model
from .vprf import VprfError, read_vprf, write_vprf


class ExtractError(ValueError):
    """Invalid extraction configuration or manifest."""


@dataclass(frozen=True)
class ExtractorConfig:
    manifest: str
    out_dir: str
    model: str = "toy-vit"
    resize: int = 32
    device: str = "cpu"
    batch_size: int = 8

    def __post_init__(self) -> None:
        if self.resize < 1:
            raise ExtractError("resize must be positive")
        if self.batch_size < 1:
            raise ExtractError("batch_size must be positive")


@dataclass
class ExtractReport:
    written: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)
    dim: int | None = None
    n_patches: int | None = None

    @property
    def ok(self) -> bool:
        return not self.skipped


def load_manifest_entries(path: str | Path) -> list[tuple[str, str]]:
    """Read (id, image path) pairs from a line-delimited JSON manifest."""
    entries: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ident, img_path = str(obj["id"]), str(obj["path"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExtractError(f"malformed manifest line {lineno}: {exc}") from exc
            if ident in seen:
                raise ExtractError(f"duplicate id {ident!r}, line {lineno}")
            seen.add(ident)
            entries.append((ident, img_path))
    return entries


def _load_image(path: str, resize: int) -> np.ndarray:
    img = Image.open(path)
    img.load()
    img = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
    array = np.asarray(img, dtype=np.float32) / 255.0
    return (array - 0.5) / 0.5  # HWC in [-1, 1]


def extract_features(config: ExtractorConfig) -> ExtractReport:
    """Write one ``<id>.vprf`` per manifest record.

    Dim and patch count are constant across the run (square resize, fixed
    patch size). Inference runs single-threaded in no-grad mode so two
    runs with the same pinned weights produce bit-identical files.
    Undecodable or unreadable images are skipped and reported at the end.
    """
    model, spec = load_model(config.model, config.device)
    if config.resize % spec.patch_size != 0:
        raise ExtractError(
            f"resize {config.resize} is not a multiple of patch size {spec.patch_size}"
        )
    entries = load_manifest_entries(config.manifest)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.set_num_threads(1)  # fixed reduction order, bitwise-stable outputs
    report = ExtractReport()
    batch: list[tuple[str, np.ndarray]] = []

    def flush() -> None:
        if not batch:
            return
        stacked = torch.from_numpy(np.stack([img for _, img in batch])).permute(0, 3, 1, 2)
        with torch.inference_mode():
            cls, patches = model(stacked.to(config.device))
        cls = cls.cpu().numpy().astype(np.float32)
        patches = patches.cpu().numpy().astype(np.float32)
        for row, (ident, _) in enumerate(batch):
            write_vprf(out_dir / f"{ident}.vprf", ident, cls[row], patches[row])
            report.written.append(ident)
        report.dim = int(cls.shape[1])
        report.n_patches = int(patches.shape[1])
        batch.clear()

    for ident, img_path in entries:
        try:
            batch.append((ident, _load_image(img_path, config.resize)))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            report.skipped.append((ident, str(exc)))
            continue
        if len(batch) >= config.batch_size:
            flush()
    flush()
    return report


def self_check(out_dir: str | Path, manifest: str | Path) -> dict:
    """Verify every manifest id has a parseable VPRF with uniform dim/N.

    Never raises for per-file problems; the report lists them.
    """
    entries = load_manifest_entries(manifest)
    out = Path(out_dir)
    failures: list[dict] = []
    dims: set[int] = set()
    patch_counts: set[int] = set()
    checked = 0
    for ident, _ in entries:
        path = out / f"{ident}.vprf"
        if not path.exists():
            failures.append({"id": ident, "error": f"missing file {path.name}"})
            continue
        try:
            file_id, cls, patches = read_vprf(path)
        except VprfError as exc:
            failures.append({"id": ident, "error": f"parse error: {exc}"})
            continue
        if file_id != ident:
            failures.append({"id": ident, "error": f"id mismatch: file says {file_id!r}"})
            continue
        if not (np.all(np.isfinite(cls)) and np.all(np.isfinite(patches))):
            failures.append({"id": ident, "error": "non-finite values"})
            continue
        dims.add(cls.shape[0])
        patch_counts.add(patches.shape[0])
        checked += 1
    if len(dims) > 1:
        failures.append({"id": "*", "error": f"non-uniform dim across files: {sorted(dims)}"})
    if len(patch_counts) > 1:
        failures.append({"id": "*", "error": f"non-uniform patch count: {sorted(patch_counts)}"})
    return {
        "status": "ok" if not failures else "failed",
        "checked": checked,
        "total": len(entries),
        "dim": sorted(dims),
        "n_patches": sorted(patch_counts),
        "failures": failures,
    }
