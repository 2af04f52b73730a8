"""Per-user daily-activity anomaly detection over audit logs.

Thin wrapper around the compiled core: mixture fitting and scoring,
rate metrics and ROC, skip-gram day embeddings, synthetic corpus
generation, ratio normalization and full pipeline runs.
"""

from daywatch._core import (
    fit_bgmm,
    fit_gmm_em,
    generate_corpus,
    log_likelihoods,
    metrics,
    normalize_ratios,
    roc,
    run,
    train_skipgram,
)

__all__ = [
    "fit_bgmm",
    "fit_gmm_em",
    "generate_corpus",
    "log_likelihoods",
    "metrics",
    "normalize_ratios",
    "roc",
    "run",
    "train_skipgram",
]
