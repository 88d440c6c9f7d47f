"""Python surface of the blood cell CNN core."""

from ._core import (
    ConfigError,
    DataError,
    FormatError,
    Model,
    NumericError,
    ShapeError,
    decode_ppm,
    resize_bilinear,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FormatError",
    "Model",
    "NumericError",
    "ShapeError",
    "decode_ppm",
    "resize_bilinear",
]
