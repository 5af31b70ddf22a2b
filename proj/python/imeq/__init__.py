"""Implicit equation discovery from point sets.

Expression trees in prefix notation, synthetic corpus generation, an
anti-degeneracy fitness, BFGS constant fitting, a set-to-sequence skeleton
model with beam-search decoding, a genetic-programming baseline, and a
solver-based evaluation metric.
"""

from ._core import (
    D_MAX,
    VOCAB_SIZE,
    AllRestartsDegenerate,
    DegenerateTruth,
    Expr,
    MalformedPrefix,
    Model,
    NoViableCandidate,
    ParseError,
    SlotCountMismatch,
    clfem_fitness,
    discover,
    evaluate,
    extract_skeleton,
    fit_constants,
    generate_corpus,
    gp_run,
    instantiate,
    load_corpus,
    load_model,
    load_suite,
    train_model,
    vanilla_fitness,
)

__all__ = [
    "D_MAX",
    "VOCAB_SIZE",
    "AllRestartsDegenerate",
    "DegenerateTruth",
    "Expr",
    "MalformedPrefix",
    "Model",
    "NoViableCandidate",
    "ParseError",
    "SlotCountMismatch",
    "clfem_fitness",
    "discover",
    "evaluate",
    "extract_skeleton",
    "fit_constants",
    "generate_corpus",
    "gp_run",
    "instantiate",
    "load_corpus",
    "load_model",
    "load_suite",
    "train_model",
    "vanilla_fitness",
]
