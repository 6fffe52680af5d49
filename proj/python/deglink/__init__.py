"""Degree-aware cross-network user identity linkage."""

from ._core import (
    Graph,
    Inputs,
    Model,
    ablate,
    evaluate,
    hits_at_k,
    load_config,
    load_inputs,
    mrr,
    node2vec,
    normalize_config,
    partition,
    prepare_inputs,
    rank_candidates,
    run_experiment,
    synthetic_pair,
    train,
)

__all__ = [
    "Graph",
    "Inputs",
    "Model",
    "ablate",
    "evaluate",
    "hits_at_k",
    "load_config",
    "load_inputs",
    "mrr",
    "node2vec",
    "normalize_config",
    "partition",
    "prepare_inputs",
    "rank_candidates",
    "run_experiment",
    "synthetic_pair",
    "train",
]
