"""Deterministic offline stand-ins for the refiner model.

Each mock exposes the same ``complete(request) -> (text, cached)``
surface as the live client and answers in the live output grammar, so
mocked runs exercise the real parsing and fallback paths end to end.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

from ..dataset import Pose
from ..evaluation import geo_distance
from .client import ChatRequest

MOCK_KINDS = ("identity", "distance_oracle", "similarity_oracle", "scripted")


class MockConfigError(ValueError):
    """Mock kind misconfigured or missing required context."""


def _describe_text(request: ChatRequest) -> str:
    cand = request.candidate_ids[0] if request.candidate_ids else "?"
    return (
        f"SIMILARITIES: offline mock comparison of query {request.query_id} "
        f"and candidate {cand}.\n"
        "DISSIMILARITIES: none recorded by the offline mock."
    )


def _ranking_line(order: list[int]) -> str:
    return "FINAL_RANKING: " + ", ".join(str(i) for i in order)


class IdentityMock:
    """Replays the coarse order unchanged."""

    needs_images = False
    model_id = "mock:identity"

    def complete(self, request: ChatRequest) -> tuple[str, bool]:
        if request.kind == "describe":
            return _describe_text(request), False
        order = list(range(1, len(request.candidate_ids) + 1))
        return "Keeping the incoming order.\n" + _ranking_line(order), False


class DistanceOracleMock:
    """Ranks candidates by true geographic distance to the query, ascending."""

    needs_images = False
    model_id = "mock:distance_oracle"

    def __init__(self, poses: Mapping[str, Pose]) -> None:
        if not poses:
            raise MockConfigError("distance_oracle requires ground-truth poses")
        self._poses = poses

    def _distance(self, query_id: str, candidate_id: str) -> float:
        try:
            return geo_distance(self._poses[query_id], self._poses[candidate_id])
        except KeyError as exc:
            raise MockConfigError(f"distance_oracle missing pose for {exc.args[0]!r}") from exc

    def complete(self, request: ChatRequest) -> tuple[str, bool]:
        if request.kind == "describe":
            d = self._distance(request.query_id, request.candidate_ids[0])
            return (
                f"SIMILARITIES: ground-truth distance is {d!r} m.\n"
                "DISSIMILARITIES: none recorded by the oracle."
            ), False
        distances = [
            self._distance(request.query_id, cand) for cand in request.candidate_ids
        ]
        # Ties resolve toward the earlier coarse position.
        order = sorted(range(1, len(distances) + 1), key=lambda i: (distances[i - 1], i))
        return "Ranked by ground-truth distance.\n" + _ranking_line(order), False


class SimilarityOracleMock:
    """Ranks candidates by the coarse similarity scores carried in the request."""

    needs_images = False
    model_id = "mock:similarity_oracle"

    def complete(self, request: ChatRequest) -> tuple[str, bool]:
        if request.kind == "describe":
            return _describe_text(request), False
        if request.scores is None:
            raise MockConfigError("similarity_oracle requires coarse scores in the request")
        order = sorted(
            range(1, len(request.candidate_ids) + 1),
            key=lambda i: (-request.scores[i - 1], request.candidate_ids[i - 1]),
        )
        return "Ranked by descriptor similarity.\n" + _ranking_line(order), False


class ScriptedMock:
    """Replays a fixture transcript byte for byte.

    Transcript: line-delimited JSON with keys ``kind``, ``query_id``,
    ``candidate_id`` (describe entries only), and ``text``.
    """

    needs_images = False
    model_id = "mock:scripted"

    def __init__(self, transcript_path: str | Path) -> None:
        self._responses: dict[tuple, str] = {}
        with open(transcript_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if obj["kind"] == "describe":
                    key = ("describe", obj["query_id"], obj["candidate_id"])
                else:
                    key = ("rerank", obj["query_id"])
                self._responses[key] = obj["text"]

    def complete(self, request: ChatRequest) -> tuple[str, bool]:
        if request.kind == "describe":
            key = ("describe", request.query_id, request.candidate_ids[0])
        else:
            key = ("rerank", request.query_id)
        try:
            return self._responses[key], False
        except KeyError:
            raise MockConfigError(f"transcript has no entry for {key}") from None


def make_mock_client(
    kind: str,
    poses: Mapping[str, Pose] | None = None,
    transcript_path: str | Path | None = None,
):
    if kind == "identity":
        return IdentityMock()
    if kind == "distance_oracle":
        if poses is None:
            raise MockConfigError("distance_oracle requires ground-truth poses")
        return DistanceOracleMock(poses)
    if kind == "similarity_oracle":
        return SimilarityOracleMock()
    if kind == "scripted":
        if transcript_path is None:
            raise MockConfigError("scripted mock requires a transcript path")
        return ScriptedMock(transcript_path)
    raise MockConfigError(f"unknown mock kind {kind!r}")
