"""Global proxy-based hard mining for metric learning on synthetic place data."""

from ._core import (
    Config,
    ConfigError,
    Dataset,
    DegenerateInputError,
    DimensionError,
    Error,
    Model,
    NumericError,
    ParseError,
    PreconditionError,
    ValidationError,
    bank_bytes,
    build_batch_plan,
    compute_loss,
    compute_place_proxy,
    generate,
    knn_search,
    load_dataset,
    pairwise_similarity,
    random_plan,
    recall_at_k,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
