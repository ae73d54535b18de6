"""Gap reconstruction for indoor-climate time series with denoising autoencoders."""

from ._core import (
    BINS_PER_DAY,
    Autoencoder,
    ChecksumError,
    ConfigError,
    DivergenceError,
    FormatError,
    InsufficientDataError,
    MismatchError,
    ParseError,
    ShapeError,
    corrupt,
    fit_normalizer,
    mask_length,
    nrmse,
    poly_interpolate,
    rmse,
    sat,
    split,
    synthetic_day_matrix,
)

__all__ = [
    "BINS_PER_DAY",
    "Autoencoder",
    "ChecksumError",
    "ConfigError",
    "DivergenceError",
    "FormatError",
    "InsufficientDataError",
    "MismatchError",
    "ParseError",
    "ShapeError",
    "corrupt",
    "fit_normalizer",
    "mask_length",
    "nrmse",
    "poly_interpolate",
    "rmse",
    "sat",
    "split",
    "synthetic_day_matrix",
]
