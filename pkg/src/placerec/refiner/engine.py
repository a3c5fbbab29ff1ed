"""The compare-then-rank refinement flow over a coarse candidate list.

Phase one sends each query-candidate image pair for a textual delta
description; phase two concatenates all K labeled descriptions into a
single reasoning request whose answer is parsed into a permutation of
the coarse candidates. Any unparseable answer falls back to the coarse
order, so refinement can never corrupt the candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..dataset import ImageRecord
from .client import ChatRequest, prepare_image
from .parsing import parse_final_ranking
from .prompts import PromptTemplate


class RefineError(ValueError):
    """Refinement called with inconsistent inputs."""


@dataclass(frozen=True)
class PairDescription:
    query_id: str
    candidate_id: str
    candidate_rank_in_coarse: int
    text: str
    model_id: str
    cached: bool

    def __post_init__(self) -> None:
        if not self.text:
            raise RefineError("pair description text must be nonempty")
        if self.candidate_rank_in_coarse < 1:
            raise RefineError("coarse rank must be >= 1")


@dataclass(frozen=True)
class RerankResult:
    query_id: str
    order: tuple[str, ...]
    rationale: str
    parse_status: str  # "parsed" | "fallback_coarse"


def build_pair_prompt(
    template: PromptTemplate,
    query_image: bytes,
    candidate_image: bytes,
    query_id: str = "",
    candidate_id: str = "",
    image_max_side: int = 768,
) -> ChatRequest:
    """Assemble a description request: prompt text plus both images, query first."""
    return ChatRequest(
        kind="describe",
        text=template.description_prompt_text,
        images=(
            prepare_image(query_image, image_max_side),
            prepare_image(candidate_image, image_max_side),
        ),
        query_id=query_id,
        candidate_ids=(candidate_id,),
    )


def describe_delta(
    client,
    template: PromptTemplate,
    query: ImageRecord,
    candidate: ImageRecord,
    coarse_rank: int = 1,
    image_max_side: int = 768,
) -> PairDescription:
    """Fetch the textual delta for one pair, via cache when warm."""
    if getattr(client, "needs_images", False):
        request = build_pair_prompt(
            template,
            Path(query.path).read_bytes(),
            Path(candidate.path).read_bytes(),
            query_id=query.id,
            candidate_id=candidate.id,
            image_max_side=image_max_side,
        )
    else:
        request = ChatRequest(
            kind="describe",
            text=template.description_prompt_text,
            query_id=query.id,
            candidate_ids=(candidate.id,),
        )
    text, cached = client.complete(request)
    return PairDescription(
        query_id=query.id,
        candidate_id=candidate.id,
        candidate_rank_in_coarse=coarse_rank,
        text=text,
        model_id=getattr(client, "model_id", "unknown"),
        cached=cached,
    )


def build_rerank_text(
    template: PromptTemplate,
    descriptions: Sequence[PairDescription],
) -> str:
    k = len(descriptions)
    prompt = template.rerank_prompt_text.replace("{{candidate_count}}", str(k))
    notes = [
        f"Candidate {i}: {d.text}"
        for i, d in enumerate(sorted(descriptions, key=lambda d: d.candidate_rank_in_coarse), 1)
    ]
    return prompt + "\n\n" + "\n\n".join(notes)


def rerank(
    client,
    template: PromptTemplate,
    descriptions: Sequence[PairDescription],
    coarse_order: Sequence[str],
    scores: Sequence[float] | None = None,
) -> RerankResult:
    """Rank the coarse candidates from their delta descriptions.

    ``descriptions`` must cover exactly the ids in ``coarse_order``. The
    model's answer counts only if its final ranking line is a permutation
    of 1..K; otherwise the coarse order is kept (parse fallback, which is
    an expected outcome rather than an error).
    """
    if not coarse_order:
        raise RefineError("coarse order must contain at least one candidate")
    if sorted(d.candidate_id for d in descriptions) != sorted(coarse_order):
        raise RefineError("descriptions do not cover exactly the coarse candidates")
    query_id = descriptions[0].query_id
    request = ChatRequest(
        kind="rerank",
        text=build_rerank_text(template, descriptions),
        query_id=query_id,
        candidate_ids=tuple(coarse_order),
        scores=tuple(scores) if scores is not None else None,
    )
    response, _ = client.complete(request)
    permutation = parse_final_ranking(response, len(coarse_order))
    if permutation is None:
        return RerankResult(
            query_id=query_id,
            order=tuple(coarse_order),
            rationale=response,
            parse_status="fallback_coarse",
        )
    return RerankResult(
        query_id=query_id,
        order=tuple(coarse_order[i - 1] for i in permutation),
        rationale=response,
        parse_status="parsed",
    )
