"""Behavior sequence modeling: structured tokenization, transformer/MLP
backbones, and a count-based GBDT baseline."""

from ._core import (
    __version__,
    assign_labels,
    backbone_presets,
    benchmark,
    classification_metrics,
    count_featurize,
    count_parameters,
    default_generator_config,
    evaluate,
    fit_quantiles,
    generate_corpus,
    train,
)

__all__ = [
    "__version__",
    "assign_labels",
    "backbone_presets",
    "benchmark",
    "classification_metrics",
    "count_featurize",
    "count_parameters",
    "default_generator_config",
    "evaluate",
    "fit_quantiles",
    "generate_corpus",
    "train",
]
