"""Pipeline stages behind the CLI subcommands.

Stages communicate only through files (index, retrieval, rerank,
reports), so each can be re-run independently; a warm response cache
makes the whole run idempotent byte for byte (the audit log's timestamps
aside).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import stages
from .config import RunConfig
from .dataset import ImageRecord, feature_path, load_manifest, read_feature_file
from .descriptor import aggregate
from .evaluation import (
    EvalReport,
    format_comparison,
    recall_at_k,
    subsample_queries,
    write_report,
)
from .index import CandidateSet, build_index, load_index, retrieve_topk, save_index
from .refiner.client import MllmClient
from .refiner.engine import describe_delta, rerank
from .refiner.mock import make_mock_client
from .refiner.prompts import build_template

log = logging.getLogger(__name__)

INDEX_FILE = "index.vpri"
RETRIEVAL_FILE = "retrieval.jsonl"
RERANK_FILE = "rerank.jsonl"
REPORT_COARSE_FILE = "report_coarse.jsonl"
REPORT_REFINED_FILE = "report_refined.jsonl"


class PipelineError(RuntimeError):
    """A stage cannot run with the given inputs."""


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_features(config: RunConfig, record: ImageRecord):
    path = feature_path(config.features, record.id)
    if not path.exists():
        raise PipelineError(f"missing feature file for id {record.id!r}: {path}")
    return read_feature_file(path)


def _aggregate_records(config: RunConfig, records: list[ImageRecord]):
    descriptors = []
    dim: int | None = None
    for record in records:
        fs = _load_features(config, record)
        if dim is None:
            dim = fs.dim
        elif fs.dim != dim:
            raise PipelineError(
                f"feature dim mismatch for id {record.id!r}: got {fs.dim}, expected {dim}"
            )
        descriptors.append(aggregate(fs, config.aggregation))
    return descriptors


def build_refiner_client(config: RunConfig, records: list[ImageRecord] | None = None):
    if config.refiner == "live":
        return MllmClient(config.mllm)
    kind = config.refiner.split(":", 1)[1]
    poses = {r.id: r.pose for r in records} if records is not None else None
    return make_mock_client(kind, poses=poses, transcript_path=config.transcript)


def cmd_index(config: RunConfig) -> Path:
    """Aggregate every reference image's features and persist the index."""
    records = [r for r in load_manifest(config.manifest) if r.split == "reference"]
    if not records:
        raise PipelineError("no reference records in manifest")
    descriptors = _aggregate_records(config, records)
    index = build_index(descriptors)
    out_path = _out_dir(config) / INDEX_FILE
    save_index(index, out_path)
    log.info("indexed %d references, dim %d -> %s", len(index), index.dim, out_path)
    return out_path


def cmd_retrieve(config: RunConfig) -> Path:
    """Run top-k retrieval for every (optionally subsampled) query."""
    index_path = _out_dir(config) / INDEX_FILE
    if not index_path.exists():
        raise PipelineError(f"index file not found: {index_path} (run the index stage first)")
    index = load_index(index_path)
    queries = [r for r in load_manifest(config.manifest) if r.split == "query"]
    if not queries:
        raise PipelineError("empty query set")
    if config.eval.subsample_n is not None:
        queries = subsample_queries(queries, config.eval.subsample_n, config.eval.seed)
    results: list[CandidateSet] = []
    for record in queries:
        descriptor = aggregate(_load_features(config, record), config.aggregation)
        results.append(retrieve_topk(index, descriptor, config.k))
    out_path = _out_dir(config) / RETRIEVAL_FILE
    stages.write_retrieval(out_path, results, k=config.k, method=config.aggregation.method)
    log.info("retrieved top-%d for %d queries -> %s", config.k, len(results), out_path)
    return out_path


def cmd_refine(config: RunConfig, client=None) -> Path:
    """Describe every query-candidate pair, then rerank per query.

    Description requests run in parallel across all pairs; the one rerank
    request per query happens after that query's descriptions complete.
    All descriptions and rationales are persisted for audit. On transport
    failure, responses already cached keep the progress: a rerun only
    re-issues the missing requests.
    """
    out = _out_dir(config)
    _, retrieval = stages.read_retrieval(out / RETRIEVAL_FILE)
    records = {r.id: r for r in load_manifest(config.manifest)}
    if client is None:
        client = build_refiner_client(config, list(records.values()))
    template = build_template(
        scene_kind=config.scene_kind,
        components=config.prompt_components,
        template_dir=config.template_dir,
    )

    def describe_one(task):
        cs, candidate = task
        return describe_delta(
            client,
            template,
            query=records[cs.query_id],
            candidate=records[candidate.image_id],
            coarse_rank=candidate.rank,
            image_max_side=config.mllm.image_max_side,
        )

    tasks = [(cs, candidate) for cs in retrieval for candidate in cs.candidates]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        described = list(pool.map(describe_one, tasks))
    by_query: dict[str, list] = {}
    for desc in described:
        by_query.setdefault(desc.query_id, []).append(desc)

    descriptions_dir = out / "descriptions"
    rationales_dir = out / "rationales"
    descriptions_dir.mkdir(exist_ok=True)
    rationales_dir.mkdir(exist_ok=True)
    rows = []
    n_cached = 0
    for cs in retrieval:
        descriptions = sorted(by_query[cs.query_id], key=lambda d: d.candidate_rank_in_coarse)
        query_dir = descriptions_dir / cs.query_id
        query_dir.mkdir(exist_ok=True)
        for desc in descriptions:
            n_cached += desc.cached
            (query_dir / f"{desc.candidate_rank_in_coarse:02d}_{desc.candidate_id}.txt").write_text(
                desc.text, encoding="utf-8"
            )
        result = rerank(client, template, descriptions, cs.ids, scores=cs.scores)
        rationale_path = rationales_dir / f"{cs.query_id}.txt"
        rationale_path.write_text(result.rationale, encoding="utf-8")
        rows.append(
            {
                "query_id": cs.query_id,
                "order": list(result.order),
                "parse_status": result.parse_status,
                "rationale_path": str(rationale_path.relative_to(out)),
            }
        )
    out_path = out / RERANK_FILE
    stages.write_rerank(out_path, rows, method=config.refiner)
    log.info(
        "refined %d queries (%d cached descriptions) -> %s", len(rows), n_cached, out_path
    )
    return out_path


def cmd_eval(config: RunConfig) -> tuple[EvalReport, EvalReport | None]:
    """Score coarse (and refined, when present) rankings; emit both reports."""
    out = _out_dir(config)
    _, retrieval = stages.read_retrieval(out / RETRIEVAL_FILE)
    poses = {r.id: r.pose for r in load_manifest(config.manifest)}
    coarse_results = {cs.query_id: cs.ids for cs in retrieval}
    coarse = recall_at_k(coarse_results, poses, config.eval, method="coarse")
    write_report(coarse, out / REPORT_COARSE_FILE)

    refined: EvalReport | None = None
    rerank_path = out / RERANK_FILE
    if rerank_path.exists():
        _, rows = stages.read_rerank(rerank_path)
        refined_results = {row["query_id"]: row["order"] for row in rows}
        statuses = {row["query_id"]: row["parse_status"] for row in rows}
        refined = recall_at_k(
            refined_results, poses, config.eval, method="refined", parse_statuses=statuses
        )
        write_report(refined, out / REPORT_REFINED_FILE)
    print(format_comparison(coarse, refined))
    return coarse, refined


def cmd_run(config: RunConfig, client=None) -> tuple[EvalReport, EvalReport | None]:
    """index -> retrieve -> refine -> eval; abort names the failing stage."""
    stage_fns = [
        ("index", lambda: cmd_index(config)),
        ("retrieve", lambda: cmd_retrieve(config)),
        ("refine", lambda: cmd_refine(config, client=client)),
        ("eval", lambda: cmd_eval(config)),
    ]
    result = None
    for name, fn in stage_fns:
        try:
            result = fn()
        except Exception as exc:
            raise PipelineError(f"stage {name!r} failed: {exc}") from exc
    return result
