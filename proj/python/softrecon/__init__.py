"""Soft-robot deformation sensing and reconstruction toolkit."""

from softrecon._core import (
    Error,
    Model,
    NormStats,
    __version__,
    apply_rigid,
    decode_joint,
    decode_membrane,
    evaluate_surface,
    fit_surface,
    load_model,
    load_norm_stats,
    nearest_rotation,
    rotation_error,
    rotation_to_tait_bryan,
    sample_grid,
    solve_rigid,
    tait_bryan_to_rotation,
)

__all__ = [
    "Error",
    "Model",
    "NormStats",
    "__version__",
    "apply_rigid",
    "decode_joint",
    "decode_membrane",
    "evaluate_surface",
    "fit_surface",
    "load_model",
    "load_norm_stats",
    "nearest_rotation",
    "rotation_error",
    "rotation_to_tait_bryan",
    "sample_grid",
    "solve_rigid",
    "tait_bryan_to_rotation",
]
