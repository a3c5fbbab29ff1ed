import json

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def toy_world(tmp_path):
    """Five small images plus a manifest in the pipeline's line format."""
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    rng = np.random.default_rng(99)
    records = []
    for i in range(5):
        ident = f"img{i}"
        pixels = rng.integers(0, 256, size=(40, 56, 3), dtype=np.uint8)
        path = images_dir / f"{ident}.png"
        Image.fromarray(pixels).save(path)
        records.append(
            {
                "id": ident,
                "path": str(path),
                "split": "reference" if i else "query",
                "pose": {"kind": "utm", "easting": float(i), "northing": 0.0},
            }
        )
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return manifest, images_dir
