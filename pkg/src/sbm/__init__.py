"""Numerical laboratory for the finite-rate symbiotic branching pair and its
coloured-particle dual."""

__version__ = "0.1.0"

from .core import (
    BOUNDARY_PINNED,
    FieldPair,
    GridSpec,
    ModelParams,
    MomentEstimate,
    RngStream,
    combined_std_error,
    default_halfwidth,
    derive_seed,
    grid_for_horizon,
    make_constant_ic,
    make_heaviside_ic,
    pair_field,
    pair_values,
    sample_correlated_noise,
)

__all__ = [
    "BOUNDARY_PINNED",
    "FieldPair",
    "GridSpec",
    "ModelParams",
    "MomentEstimate",
    "RngStream",
    "combined_std_error",
    "default_halfwidth",
    "derive_seed",
    "grid_for_horizon",
    "make_constant_ic",
    "make_heaviside_ic",
    "pair_field",
    "pair_values",
    "sample_correlated_noise",
    "__version__",
]
