"""Geographic correctness and Recall@K over ranked retrieval results.

A query counts as correct at K when any of its top-K candidates lies
within the distance threshold of the query's own pose. Reports serialize
as line-delimited JSON (one summary line, then one line per query) so CI
can diff them; a human-readable table goes to stdout separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, TypeVar

from .dataset import Pose
from .rng import sample_without_replacement

EARTH_RADIUS_M = 6_371_000.0

REPORT_FORMAT = "vpr-report"
REPORT_VERSION = 1

T = TypeVar("T")


class EvalError(ValueError):
    """Invalid evaluation input."""


@dataclass(frozen=True)
class EvalConfig:
    threshold_m: float = 25.0
    ks: tuple[int, ...] = (1, 5)
    subsample_n: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.threshold_m) and self.threshold_m > 0):
            raise EvalError("threshold_m must be positive")
        if not self.ks or any(k < 1 for k in self.ks):
            raise EvalError("ks must be positive integers")
        if any(a >= b for a, b in zip(self.ks, self.ks[1:])):
            raise EvalError("ks must be strictly ascending")
        if self.subsample_n is not None and self.subsample_n < 1:
            raise EvalError("subsample_n must be positive")


@dataclass(frozen=True)
class QueryOutcome:
    query_id: str
    correct_at: dict[int, bool]
    best_correct_rank: int | None


@dataclass
class EvalReport:
    method: str
    threshold_m: float
    recalls: dict[int, float]
    per_query: list[QueryOutcome]
    n_queries: int
    n_parsed: int = 0
    n_fallback: int = 0


def geo_distance(a: Pose, b: Pose) -> float:
    """Meters between two poses: planar Euclidean for UTM, haversine for WGS84."""
    if a.kind != b.kind:
        raise EvalError(f"mixed pose kinds: {a.kind!r} vs {b.kind!r}")
    if a.kind == "utm":
        return math.hypot(a.x - b.x, a.y - b.y)
    lat1, lon1, lat2, lon2 = map(math.radians, (a.x, a.y, b.x, b.y))
    h = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def recall_at_k(
    results: Mapping[str, Sequence[str]],
    poses: Mapping[str, Pose],
    config: EvalConfig,
    method: str = "coarse",
    parse_statuses: Mapping[str, str] | None = None,
) -> EvalReport:
    """Score ranked candidate ids per query against the pose ground truth.

    ``results`` maps query id to its ranked candidate ids (best first);
    ``poses`` must resolve every query and candidate id. Recall at K over
    a ranking longer than K uses the first K entries.
    """
    if not results:
        raise EvalError("empty query set")
    per_query: list[QueryOutcome] = []
    hits = {k: 0 for k in config.ks}
    for query_id, ranked in results.items():
        if query_id not in poses:
            raise EvalError(f"unresolvable id {query_id!r}")
        qpose = poses[query_id]
        best_rank: int | None = None
        for rank, cand_id in enumerate(ranked, start=1):
            if cand_id not in poses:
                raise EvalError(f"unresolvable id {cand_id!r}")
            if geo_distance(qpose, poses[cand_id]) <= config.threshold_m:
                best_rank = rank
                break
        correct_at = {k: best_rank is not None and best_rank <= k for k in config.ks}
        for k in config.ks:
            if correct_at[k]:
                hits[k] += 1
        per_query.append(
            QueryOutcome(query_id=query_id, correct_at=correct_at, best_correct_rank=best_rank)
        )
    n = len(per_query)
    recalls = {k: hits[k] / n for k in config.ks}
    n_parsed = 0
    n_fallback = 0
    if parse_statuses is not None:
        n_parsed = sum(1 for s in parse_statuses.values() if s == "parsed")
        n_fallback = sum(1 for s in parse_statuses.values() if s == "fallback_coarse")
    return EvalReport(
        method=method,
        threshold_m=config.threshold_m,
        recalls=recalls,
        per_query=per_query,
        n_queries=n,
        n_parsed=n_parsed,
        n_fallback=n_fallback,
    )


def subsample_queries(queries: Sequence[T], n: int, seed: int) -> list[T]:
    """Uniform sample without replacement, preserving original relative order.

    Deterministic across platforms: uses the pinned generator from
    :mod:`placerec.rng`, never the standard library RNG.
    """
    if n > len(queries):
        raise EvalError(f"cannot subsample {n} queries from {len(queries)}")
    picked = sample_without_replacement(len(queries), n, seed)
    return [queries[i] for i in picked]


def write_report(report: EvalReport, path: str | Path) -> None:
    """Emit the line-delimited report: summary line first, then one per query."""
    with open(path, "w", encoding="utf-8") as fh:
        summary = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "method": report.method,
            "threshold_m": report.threshold_m,
            "ks": sorted(report.recalls),
            "recalls": {str(k): report.recalls[k] for k in sorted(report.recalls)},
            "n_queries": report.n_queries,
            "n_parsed": report.n_parsed,
            "n_fallback": report.n_fallback,
        }
        fh.write(json.dumps(summary) + "\n")
        for q in report.per_query:
            fh.write(
                json.dumps(
                    {
                        "query_id": q.query_id,
                        "correct_at": {str(k): q.correct_at[k] for k in sorted(q.correct_at)},
                        "best_correct_rank": q.best_correct_rank,
                    }
                )
                + "\n"
            )


def read_report(path: str | Path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise EvalError(f"empty report file {path}")
    summary = json.loads(lines[0])
    if summary.get("format") != REPORT_FORMAT or summary.get("version") != REPORT_VERSION:
        raise EvalError(f"not a {REPORT_FORMAT} v{REPORT_VERSION} file: {path}")
    per_query = []
    for line in lines[1:]:
        obj = json.loads(line)
        per_query.append(
            QueryOutcome(
                query_id=obj["query_id"],
                correct_at={int(k): v for k, v in obj["correct_at"].items()},
                best_correct_rank=obj["best_correct_rank"],
            )
        )
    return EvalReport(
        method=summary["method"],
        threshold_m=summary["threshold_m"],
        recalls={int(k): v for k, v in summary["recalls"].items()},
        per_query=per_query,
        n_queries=summary["n_queries"],
        n_parsed=summary["n_parsed"],
        n_fallback=summary["n_fallback"],
    )


def format_comparison(coarse: EvalReport, refined: EvalReport | None) -> str:
    """Human-readable table with per-K deltas, e.g. ``87.0 (5.1^)``."""
    lines = []
    header = f"{'metric':<8}{'coarse':>10}"
    if refined is not None:
        header += f"{'refined':>10}{'delta':>14}"
    lines.append(header)
    for k in sorted(coarse.recalls):
        row = f"R@{k:<6}{100.0 * coarse.recalls[k]:>10.1f}"
        if refined is not None:
            delta = 100.0 * (refined.recalls[k] - coarse.recalls[k])
            arrow = "^" if delta >= 0 else "v"
            row += f"{100.0 * refined.recalls[k]:>10.1f}{f'({abs(delta):.1f}{arrow})':>14}"
        lines.append(row)
    lines.append(
        f"queries: {coarse.n_queries}"
        + (
            f", parsed: {refined.n_parsed}, fallback: {refined.n_fallback}"
            if refined is not None
            else ""
        )
    )
    return "\n".join(lines)
