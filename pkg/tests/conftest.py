import io

import numpy as np
import pytest

from placerec.dataset import FeatureSet


def make_featureset(image_id="img", dim=4, n_patches=3, rng=None, low=0.1, high=2.0):
    rng = rng if rng is not None else np.random.default_rng(0)
    cls = rng.uniform(low, high, size=dim).astype(np.float32)
    patches = rng.uniform(low, high, size=(n_patches, dim)).astype(np.float32)
    return FeatureSet(image_id=image_id, cls=cls, patches=patches)


def unit_vector(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def unit_f32(rng, dim):
    """Unit vector whose values are exactly float32-representable.

    The index quantizes stored vectors through float32; descriptors built
    from these values survive that quantization bit for bit, so an
    independent oracle can score identical data.
    """
    return unit_vector(rng, dim).astype(np.float32).astype(np.float64)


def tiny_png(color=(200, 40, 40), size=(16, 16)):
    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


class FakeClock:
    """Manual clock: sleep() advances monotonic time instantly."""

    def __init__(self, start=0.0):
        self.now = start
        self.sleeps = []

    def monotonic(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


class CountingTransport:
    """Fake wire transport: serves scripted outcomes and counts calls.

    ``script`` entries are either ("ok", text), ("status", code), or
    ("raise", message); after the script runs dry the last entry repeats.
    """

    def __init__(self, script=None, text="SIMILARITIES: x\nDISSIMILARITIES: y"):
        self.script = list(script) if script is not None else [("ok", text)]
        self.calls = 0
        self.payloads = []

    def __call__(self, url, headers, payload, timeout):
        entry = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        self.payloads.append(payload)
        kind, value = entry
        if kind == "raise":
            raise ConnectionError(value)
        if kind == "status":
            return value, {"error": "scripted failure"}
        return 200, {
            "choices": [{"message": {"content": value}}],
            "usage": {"total_tokens": 10},
        }


@pytest.fixture
def fake_clock():
    return FakeClock()
