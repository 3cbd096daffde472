"""Kernel-PCA stochastic inversion of elastic parameter fields."""

from ._core import (
    ChainRecord,
    Error,
    ExperimentConfig,
    InvalidArgument,
    Kernel,
    KpcaModel,
    Mesh,
    PceModel,
    PreimageResult,
    diagnostics,
    fit,
    fit_pce,
    generate,
    generate_snapshots,
    hermite,
    invert,
    misfit_gradient,
    report,
    sample_gaussian,
    solve_forward,
    structured_mesh,
    synth_obs,
)

__all__ = [
    "ChainRecord",
    "Error",
    "ExperimentConfig",
    "InvalidArgument",
    "Kernel",
    "KpcaModel",
    "Mesh",
    "PceModel",
    "PreimageResult",
    "diagnostics",
    "fit",
    "fit_pce",
    "generate",
    "generate_snapshots",
    "hermite",
    "invert",
    "misfit_gradient",
    "report",
    "sample_gaussian",
    "solve_forward",
    "structured_mesh",
    "synth_obs",
]
