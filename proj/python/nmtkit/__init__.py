"""Python bindings for the nmtkit sequence-to-sequence toolkit."""

from ._core import (
    BpeModel,
    ConfigError,
    DataError,
    Model,
    NumericError,
    ShapeError,
    Vocabulary,
    apply_filters,
    bleu,
    checkpoint_name,
    parse_config,
    perplexity,
    registered_models,
    tokenize_v13a,
    train,
)

__all__ = [
    "BpeModel",
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "ShapeError",
    "Vocabulary",
    "apply_filters",
    "bleu",
    "checkpoint_name",
    "parse_config",
    "perplexity",
    "registered_models",
    "tokenize_v13a",
    "train",
]
