from .client import (
    ChatRequest,
    EmptyResponseError,
    ImageDecodeError,
    MllmClient,
    MllmClientConfig,
    RateLimitExhaustedError,
    RateLimiter,
    ResponseCache,
    TransportError,
    cache_key,
    prepare_image,
)
from .engine import (
    PairDescription,
    RefineError,
    RerankResult,
    build_pair_prompt,
    describe_delta,
    rerank,
)
from .mock import MOCK_KINDS, MockConfigError, make_mock_client
from .parsing import parse_final_ranking
from .prompts import COMPONENT_FLAGS, PromptTemplate, TemplateError, build_template

__all__ = [
    "ChatRequest",
    "COMPONENT_FLAGS",
    "EmptyResponseError",
    "ImageDecodeError",
    "MOCK_KINDS",
    "MllmClient",
    "MllmClientConfig",
    "MockConfigError",
    "PairDescription",
    "PromptTemplate",
    "RateLimitExhaustedError",
    "RateLimiter",
    "RefineError",
    "RerankResult",
    "ResponseCache",
    "TemplateError",
    "TransportError",
    "build_pair_prompt",
    "build_template",
    "cache_key",
    "describe_delta",
    "make_mock_client",
    "parse_final_ranking",
    "prepare_image",
    "rerank",
]
