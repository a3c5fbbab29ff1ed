"""Deterministic synthetic worlds with controlled coarse-retrieval mistakes.

Each query gets two private descriptor dimensions, so its planted
references are the only ones with nonzero similarity to it. The correct
reference sits a few meters from the query pose; for a configurable
fraction of queries, two geographically wrong "decoys" get higher
similarity, pushing the correct answer to coarse rank 3. That makes the
coarse recall and the best achievable refined recall exactly computable,
with no real dataset or model involved.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import FeatureSet, ImageRecord, Pose, feature_path, save_manifest, write_feature_file
from .rng import sample_without_replacement

CORRECT_SIM = 0.90
DECOY_SIMS = (0.96, 0.93)
RANK1_SIM = 0.98
CORRECT_OFFSET_M = 5.0


class SynthError(ValueError):
    """Inconsistent synthetic world parameters."""


@dataclass(frozen=True)
class SynthWorld:
    manifest_path: Path
    features_dir: Path
    images_dir: Path | None
    n_queries: int
    n_references: int
    rank3_query_ids: tuple[str, ...]


def _mix(base_dim: int, mix_dim: int, similarity: float, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    vec[base_dim] = similarity
    vec[mix_dim] = math.sqrt(1.0 - similarity * similarity)
    return vec


def _one_hot(index: int, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    vec[index] = 1.0
    return vec


def _write_features(features_dir: Path, image_id: str, vec: np.ndarray, n_patches: int) -> None:
    cls = vec.astype(np.float32)
    patches = np.tile(cls, (n_patches, 1))
    write_feature_file(FeatureSet(image_id=image_id, cls=cls, patches=patches), feature_path(features_dir, image_id))


def _write_image(images_dir: Path, image_id: str) -> Path:
    from PIL import Image

    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    color = (digest[0], digest[1], digest[2])
    path = images_dir / f"{image_id}.png"
    Image.new("RGB", (8, 8), color).save(path, format="PNG")
    return path


def generate_world(
    out_dir: str | Path,
    n_queries: int = 20,
    n_references: int = 200,
    rank3_fraction: float = 0.4,
    seed: int = 0,
    n_patches: int = 4,
    make_images: bool = True,
) -> SynthWorld:
    """Write manifest, features, and (optionally) images for a synthetic world.

    Exactly ``round(rank3_fraction * n_queries)`` queries (chosen by the
    pinned RNG from ``seed``) have their correct reference planted at
    coarse rank 3 behind two far-away decoys; the rest have it at rank 1.
    Output bytes are identical across runs with equal parameters.
    """
    if n_queries < 1:
        raise SynthError("need at least one query")
    if not 0.0 <= rank3_fraction <= 1.0:
        raise SynthError("rank3_fraction must be in [0, 1]")
    n_rank3 = round(rank3_fraction * n_queries)
    n_planted = n_queries + 2 * n_rank3
    if n_references < n_planted:
        raise SynthError(
            f"n_references={n_references} too small: {n_planted} planted references needed"
        )

    out = Path(out_dir)
    features_dir = out / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    images_dir: Path | None = None
    if make_images:
        images_dir = out / "images"
        images_dir.mkdir(parents=True, exist_ok=True)

    dim = 2 * n_queries + 1
    junk_dim = 2 * n_queries
    rank3_set = set(sample_without_replacement(n_queries, n_rank3, seed))

    records: list[ImageRecord] = []
    rank3_ids: list[str] = []

    def add(image_id: str, split: str, pose: Pose, vec: np.ndarray) -> None:
        path = str(_write_image(images_dir, image_id)) if images_dir else f"images/{image_id}.png"
        records.append(ImageRecord(id=image_id, path=path, split=split, pose=pose))
        _write_features(features_dir, image_id, vec, n_patches)

    ref_count = 0
    for q in range(n_queries):
        qid = f"q{q:05d}"
        base, mix = 2 * q, 2 * q + 1
        qpose = Pose.utm(1000.0 * q, 0.0)
        add(qid, "query", qpose, _one_hot(base, dim))
        correct_sim = CORRECT_SIM if q in rank3_set else RANK1_SIM
        add(
            f"r{ref_count:05d}",
            "reference",
            Pose.utm(1000.0 * q, CORRECT_OFFSET_M),
            _mix(base, mix, correct_sim, dim),
        )
        ref_count += 1
        if q in rank3_set:
            rank3_ids.append(qid)
            for j, decoy_sim in enumerate(DECOY_SIMS):
                add(
                    f"r{ref_count:05d}",
                    "reference",
                    Pose.utm(1000.0 * q, 500.0 + 100.0 * j),
                    _mix(base, mix, decoy_sim, dim),
                )
                ref_count += 1
    while ref_count < n_references:
        add(
            f"r{ref_count:05d}",
            "reference",
            Pose.utm(-50_000.0 - 17.0 * ref_count, -50_000.0),
            _one_hot(junk_dim, dim),
        )
        ref_count += 1

    manifest_path = out / "manifest.jsonl"
    save_manifest(records, manifest_path)
    return SynthWorld(
        manifest_path=manifest_path,
        features_dir=features_dir,
        images_dir=images_dir,
        n_queries=n_queries,
        n_references=n_references,
        rank3_query_ids=tuple(rank3_ids),
    )
