"""Explainable residual-noise, Fourier-peak and co-occurrence features for
detecting and attributing synthetic Western-blot images."""

from .core import (ContractError, DatasetManifest, FeatureFamily, FeatureVector, ImageDecodeError,
                   UnsupportedFormatError, central_crop, load_features, load_image, save_features)
from .noise import NoiseMethod, extract

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DatasetManifest", "FeatureFamily", "FeatureVector", "ImageDecodeError",
    "NoiseMethod", "UnsupportedFormatError", "central_crop", "extract", "load_features",
    "load_image", "save_features",
]
