"""Training-free visual place recognition.

Coarse stage: unit-norm global descriptors (CLS token or generalized-mean
pooled patch tokens) with exact top-k cosine retrieval. Fine stage: a
multimodal LLM describes each query-candidate pair and reasons over all
descriptions to rerank, with deterministic offline mocks for testing.
"""

from .dataset import (
    FeatureSet,
    FeatureFileError,
    ImageRecord,
    ManifestError,
    Pose,
    feature_path,
    load_manifest,
    read_feature_file,
    save_manifest,
    write_feature_file,
)
from .descriptor import (
    AggregationConfig,
    GlobalDescriptor,
    ZeroNormError,
    aggregate,
    aggregate_cls,
    aggregate_gem,
    cosine_similarity,
    gem_pool,
)
from .evaluation import (
    EvalConfig,
    EvalError,
    EvalReport,
    QueryOutcome,
    geo_distance,
    read_report,
    recall_at_k,
    subsample_queries,
    write_report,
)
from .index import (
    Candidate,
    CandidateSet,
    DescriptorIndex,
    IndexFileError,
    RetrievalError,
    build_index,
    load_index,
    retrieve_topk,
    save_index,
)

__version__ = "0.1.0"
