"""Global descriptors: CLS-token selection and generalized-mean patch pooling.

Both aggregators end with L2 normalization, so downstream cosine
similarity reduces to a plain dot product of unit vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureSet

AGGREGATION_METHODS = ("cls", "gem")
GEM_FORMS = ("standard", "outer_mean")


class ZeroNormError(ValueError):
    """A vector that must be normalized has zero norm."""


@dataclass(frozen=True)
class AggregationConfig:
    """Knobs for the pooling stage.

    ``p`` is the generalized-mean exponent (1 = arithmetic mean, large p
    approaches per-dimension max). ``clamp_eps`` floors patch values
    before powering, since x**p is undefined for negative x and
    non-integer p. ``gem_form`` selects where the 1/N mean sits:
    ``standard`` computes ((1/N) * sum x^p)^(1/p); ``outer_mean`` computes
    (1/N) * (sum x^p)^(1/p). The two differ only by a factor depending on
    N alone, so for a corpus with constant patch count they produce
    identical cosine rankings.
    """

    method: str = "gem"
    p: float = 3.0
    clamp_eps: float = 1e-6
    gem_form: str = "standard"

    def __post_init__(self) -> None:
        if self.method not in AGGREGATION_METHODS:
            raise ValueError(f"unknown aggregation method {self.method!r}")
        if not (math.isfinite(self.p) and self.p > 0):
            raise ValueError("p must be finite and positive")
        if self.clamp_eps <= 0:
            raise ValueError("clamp_eps must be positive")
        if self.gem_form not in GEM_FORMS:
            raise ValueError(f"unknown gem_form {self.gem_form!r}")


@dataclass(frozen=True, eq=False)
class GlobalDescriptor:
    """Unit-norm image descriptor tagged with the aggregation that made it."""

    image_id: str
    method: str
    vec: np.ndarray
    p: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vec", np.asarray(self.vec, dtype=np.float64))
        if self.method not in AGGREGATION_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if (self.p is not None) != (self.method == "gem"):
            raise ValueError("p must be present iff method is 'gem'")
        if self.vec.ndim != 1 or self.vec.shape[0] < 1:
            raise ValueError("descriptor vec must be a nonempty vector")
        if not np.all(np.isfinite(self.vec)):
            raise ValueError("descriptor entries must be finite")
        norm = float(np.linalg.norm(self.vec))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"descriptor norm {norm} not within 1e-6 of 1")

    @property
    def dim(self) -> int:
        return int(self.vec.shape[0])


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroNormError("cannot normalize a zero-norm vector")
    return vec / norm


def gem_pool(
    patches: np.ndarray,
    p: float = 3.0,
    clamp_eps: float = 1e-6,
    form: str = "standard",
) -> np.ndarray:
    """Pre-normalization generalized-mean pool over patch rows (float64).

    Per dimension d: clamp entries below at ``clamp_eps``, raise to p,
    average over patches, take the p-th root. ``outer_mean`` moves the
    1/N outside the root instead.
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("patches must be an N x D matrix with N >= 1")
    clamped = np.maximum(x, clamp_eps)
    powered = np.power(clamped, p)
    n = x.shape[0]
    if form == "standard":
        return np.power(powered.mean(axis=0), 1.0 / p)
    if form == "outer_mean":
        return np.power(powered.sum(axis=0), 1.0 / p) / n
    raise ValueError(f"unknown gem_form {form!r}")


def aggregate_cls(fs: FeatureSet) -> GlobalDescriptor:
    """Use the extractor's CLS token directly, L2-normalized."""
    vec = _unit(np.asarray(fs.cls, dtype=np.float64))
    return GlobalDescriptor(image_id=fs.image_id, method="cls", vec=vec)


def aggregate_gem(fs: FeatureSet, config: AggregationConfig | None = None) -> GlobalDescriptor:
    """Generalized-mean pool the patch tokens, then L2-normalize.

    Clamping makes every pooled entry strictly positive, so the result
    always has nonzero norm.
    """
    cfg = config if config is not None else AggregationConfig(method="gem")
    pooled = gem_pool(fs.patches, p=cfg.p, clamp_eps=cfg.clamp_eps, form=cfg.gem_form)
    return GlobalDescriptor(image_id=fs.image_id, method="gem", vec=_unit(pooled), p=cfg.p)


def aggregate(fs: FeatureSet, config: AggregationConfig) -> GlobalDescriptor:
    if config.method == "cls":
        return aggregate_cls(fs)
    return aggregate_gem(fs, config)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clipped to [-1, 1]."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    if not (np.all(np.isfinite(av)) and np.all(np.isfinite(bv))):
        raise ValueError("inputs must be finite")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(av, bv) / (na * nb), -1.0, 1.0))
