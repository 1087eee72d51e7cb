"""Sparse Gaussian process regression: exact, FITC, VFE and DTC under one
objective, with joint hyperparameter / inducing-input training."""

from ._core import (  # noqa: F401
    Dataset,
    Hyperparameters,
    MetricsReport,
    Model,
    NlmlBreakdown,
    PredictiveDistribution,
    TrainingTrace,
    __version__,
    detect_clumps,
    evaluate,
    heteroscedastic_diag,
    initialize,
    load_xy,
    nlml,
    nlml_gradient,
    optimize,
    predict,
    sample_gp,
)
