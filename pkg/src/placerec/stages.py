"""Self-describing line-delimited stage files shared by the CLI pipeline.

Every stage output starts with a versioned header line, so any stage can
be re-run independently and files can be validated before use. No stage
file embeds timestamps; reruns with identical inputs produce identical
bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

from .index import Candidate, CandidateSet

RETRIEVAL_FORMAT = "vpr-retrieval"
RERANK_FORMAT = "vpr-rerank"
STAGE_VERSION = 1


class StageFileError(ValueError):
    """Stage file missing, malformed, or of the wrong format/version."""


def _check_header(obj: dict, expected_format: str, path: str | Path) -> dict:
    if obj.get("format") != expected_format or obj.get("version") != STAGE_VERSION:
        raise StageFileError(f"not a {expected_format} v{STAGE_VERSION} file: {path}")
    return obj


def write_retrieval(
    path: str | Path, results: list[CandidateSet], k: int, method: str
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {"format": RETRIEVAL_FORMAT, "version": STAGE_VERSION, "k": k, "method": method}
            )
            + "\n"
        )
        for cs in results:
            fh.write(
                json.dumps(
                    {
                        "query_id": cs.query_id,
                        "candidates": [
                            {"rank": c.rank, "id": c.image_id, "score": c.score}
                            for c in cs.candidates
                        ],
                    }
                )
                + "\n"
            )


def read_retrieval(path: str | Path) -> tuple[dict, list[CandidateSet]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
    except FileNotFoundError as exc:
        raise StageFileError(f"retrieval file not found: {path}") from exc
    if not lines:
        raise StageFileError(f"empty retrieval file: {path}")
    header = _check_header(json.loads(lines[0]), RETRIEVAL_FORMAT, path)
    results = []
    for line in lines[1:]:
        obj = json.loads(line)
        results.append(
            CandidateSet(
                query_id=obj["query_id"],
                candidates=[
                    Candidate(rank=c["rank"], image_id=c["id"], score=c["score"])
                    for c in obj["candidates"]
                ],
            )
        )
    return header, results


def write_rerank(path: str | Path, rows: list[dict], method: str) -> None:
    """Rows carry query_id, order, parse_status, rationale_path."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"format": RERANK_FORMAT, "version": STAGE_VERSION, "refiner": method})
            + "\n"
        )
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_rerank(path: str | Path) -> tuple[dict, list[dict]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
    except FileNotFoundError as exc:
        raise StageFileError(f"rerank file not found: {path}") from exc
    if not lines:
        raise StageFileError(f"empty rerank file: {path}")
    header = _check_header(json.loads(lines[0]), RERANK_FORMAT, path)
    return header, [json.loads(line) for line in lines[1:]]
