"""Spatial VAEs with matrix-variate normal latents (C++ core)."""

from ._svae import (
    ContractError,
    DimensionError,
    FormatError,
    IoError,
    Model,
    NumericError,
    evaluate_parzen,
    kl_to_standard_normal,
    kron_diag,
    load_mnist,
    log_spaced_grid,
    param_count,
    parzen_log_density,
    save_png_grid,
    self_check,
    train,
    variants,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "FormatError",
    "IoError",
    "Model",
    "NumericError",
    "evaluate_parzen",
    "kl_to_standard_normal",
    "kron_diag",
    "load_mnist",
    "log_spaced_grid",
    "param_count",
    "parzen_log_density",
    "save_png_grid",
    "self_check",
    "train",
    "variants",
]
