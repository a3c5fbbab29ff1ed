"""Flat descriptor index with exact top-k cosine retrieval.

Reference sets here are small enough (tens of thousands) that a full
scan with partial selection is both exact and fast; approximate search
would make the refiner's input irreproducible. Stored vectors are
quantized through float32 once at build time so that saving and loading
the index cannot change any retrieval result.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .descriptor import GlobalDescriptor

VPRI_MAGIC = b"VPRI"
VPRI_VERSION = 1
_METHOD_CODES = {"cls": 0, "gem": 1}
_METHOD_NAMES = {code: name for name, code in _METHOD_CODES.items()}


class RetrievalError(ValueError):
    """Invalid index construction or query."""


class IndexFileError(ValueError):
    """Malformed VPRI index file."""


class Candidate(NamedTuple):
    rank: int
    image_id: str
    score: float


@dataclass
class CandidateSet:
    """Ranked retrieval result for one query: scores non-increasing by rank."""

    query_id: str
    candidates: list[Candidate]

    @property
    def ids(self) -> list[str]:
        return [c.image_id for c in self.candidates]

    @property
    def scores(self) -> list[float]:
        return [c.score for c in self.candidates]


class DescriptorIndex:
    """Immutable after build; concurrent read-only queries are safe."""

    def __init__(self, ids: list[str], vectors_f32: np.ndarray, method: str) -> None:
        # ids are kept sorted ascending so a stable sort on scores alone
        # yields the (score desc, id asc) order the retrieval contract needs.
        self.ids = ids
        self.vectors = vectors_f32
        self.method = method
        self._mat = vectors_f32.astype(np.float64)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)


def build_index(descriptors: list[GlobalDescriptor]) -> DescriptorIndex:
    """Build an index from unit-norm descriptors of uniform dim and method."""
    if not descriptors:
        raise RetrievalError("empty input: need at least one descriptor")
    dim = descriptors[0].dim
    method = descriptors[0].method
    seen: set[str] = set()
    for d in descriptors:
        if d.dim != dim:
            raise RetrievalError(f"dimension mismatch: {d.image_id!r} has dim {d.dim}, expected {dim}")
        if d.method != method:
            raise RetrievalError(f"method mismatch: {d.image_id!r} is {d.method!r}, expected {method!r}")
        if d.image_id in seen:
            raise RetrievalError(f"duplicate id {d.image_id!r}")
        seen.add(d.image_id)
    ordered = sorted(descriptors, key=lambda d: d.image_id)
    ids = [d.image_id for d in ordered]
    vectors = np.stack([d.vec for d in ordered]).astype(np.float32)
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        bad = ids[int(np.argmax(np.abs(norms - 1.0)))]
        raise RetrievalError(f"stored vector for {bad!r} is not unit norm")
    return DescriptorIndex(ids=ids, vectors_f32=vectors, method=method)


def retrieve_topk(index: DescriptorIndex, query: GlobalDescriptor, k: int) -> CandidateSet:
    """Exact top-k by dot product; ties broken by ascending image id.

    Partial selection first, then every entry tied with the k-th score is
    included before sorting, so the cut never splits a tie arbitrarily.
    """
    if k < 1:
        raise RetrievalError("k must be >= 1")
    if query.dim != index.dim:
        raise RetrievalError(f"dimension mismatch: query dim {query.dim}, index dim {index.dim}")
    scores = index._mat @ query.vec
    n = len(index)
    kk = min(k, n)
    if kk == n:
        pool = np.arange(n)
    else:
        kth_score = np.partition(scores, n - kk)[n - kk]
        pool = np.nonzero(scores >= kth_score)[0]
    # Stable sort on descending score keeps the id-ascending storage order
    # within equal scores.
    order = pool[np.argsort(-scores[pool], kind="stable")][:kk]
    candidates = [
        Candidate(rank=i + 1, image_id=index.ids[j], score=float(scores[j]))
        for i, j in enumerate(order)
    ]
    return CandidateSet(query_id=query.image_id, candidates=candidates)


def save_index(index: DescriptorIndex, path: str | Path) -> None:
    """Write the VPRI container (little-endian, bit-stable across runs).

    Layout: magic ``VPRI``, version u16, method u8 (0 = cls, 1 = gem),
    dim u32, count u32, then per entry id_len u16 + id UTF-8 bytes + dim
    f32 vector values.
    """
    parts = [
        VPRI_MAGIC,
        struct.pack("<H", VPRI_VERSION),
        struct.pack("<B", _METHOD_CODES[index.method]),
        struct.pack("<I", index.dim),
        struct.pack("<I", len(index)),
    ]
    for ident, row in zip(index.ids, index.vectors):
        raw = ident.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise IndexFileError(f"id too long for VPRI id_len field: {ident!r}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(np.ascontiguousarray(row, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_index(path: str | Path) -> DescriptorIndex:
    with open(path, "rb") as fh:
        data = fh.read()

    def need(offset: int, count: int) -> bytes:
        if offset + count > len(data):
            raise IndexFileError(
                f"truncated payload: expected at least {offset + count} bytes, got {len(data)}"
            )
        return data[offset : offset + count]

    if need(0, 4) != VPRI_MAGIC:
        raise IndexFileError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack("<H", need(4, 2))
    if version != VPRI_VERSION:
        raise IndexFileError(f"version mismatch: got {version}, expected {VPRI_VERSION}")
    (method_code,) = struct.unpack("<B", need(6, 1))
    if method_code not in _METHOD_NAMES:
        raise IndexFileError(f"unknown method code {method_code}")
    dim, count = struct.unpack("<II", need(7, 8))
    if dim < 1 or count < 1:
        raise IndexFileError(f"invalid header dim={dim} count={count}")
    offset = 15
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        (id_len,) = struct.unpack("<H", need(offset, 2))
        offset += 2
        ids.append(need(offset, id_len).decode("utf-8"))
        offset += id_len
        rows[i] = np.frombuffer(need(offset, 4 * dim), dtype="<f4")
        offset += 4 * dim
    if offset != len(data):
        raise IndexFileError(f"trailing bytes: expected {offset} bytes total, got {len(data)}")
    if ids != sorted(ids) or len(set(ids)) != len(ids):
        raise IndexFileError("index entries must be unique and sorted by id")
    return DescriptorIndex(ids=ids, vectors_f32=rows, method=_METHOD_NAMES[method_code])
