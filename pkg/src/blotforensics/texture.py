"""
Co-occurrence texture features (GLCM) and their Fourier variant (FFT-GLCM).

A feature vector holds five statistics (contrast, homogeneity,
dissimilarity, energy, correlation) for every (direction, distance) pair,
ordered directions outer, distances middle, statistics inner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import ContractError, FeatureFamily, FeatureVector
from .noise import NoiseMethod, extract

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
STATISTICS = ("contrast", "homogeneity", "dissimilarity", "energy", "correlation")

# statistics of a matrix with all its mass in one cell
DEGENERATE_STATS = np.array([0.0, 1.0, 0.0, 1.0, 1.0])

# residual standard deviation treated as zero; far below one 16-bit step
CONSTANT_TOL = 1e-12


@dataclass(frozen=True)
class TextureParams:
    distances: Tuple[int, ...] = (4, 8, 16, 32)
    directions: Tuple[str, ...] = (HORIZONTAL, VERTICAL)
    levels: int = 64

    def __post_init__(self):
        if not 2 <= self.levels <= 256:
            raise ContractError("levels must be in [2, 256]")
        for d in self.directions:
            if d not in (HORIZONTAL, VERTICAL):
                raise ContractError(f"unknown direction {d!r}")
        if any(int(d) < 1 for d in self.distances):
            raise ContractError("distances must be positive")
        object.__setattr__(self, "distances", tuple(int(d) for d in self.distances))
        object.__setattr__(self, "directions", tuple(self.directions))

    @property
    def dim(self) -> int:
        return len(STATISTICS) * len(self.distances) * len(self.directions)

    def feature_names(self):
        return [f"{direction[0]}/d{d}/{stat}" for direction in self.directions
                for d in self.distances for stat in STATISTICS]


def quantize(res, levels: int = 64) -> np.ndarray:
    """
    Clip the residual to mean +- 3 std and bin it uniformly into ``levels``
    integer levels.  A constant residual (spread below ``CONSTANT_TOL``, which
    absorbs floating-point rounding in residual filters) maps entirely to
    level 0.
    """
    if not 2 <= levels <= 256:
        raise ContractError("levels must be in [2, 256]")
    res = np.asarray(res, dtype=np.float64)
    mu = res.mean()
    sd = res.std()
    if not sd > CONSTANT_TOL:
        return np.zeros(res.shape, dtype=np.intp)
    lo, hi = mu - 3.0 * sd, mu + 3.0 * sd
    x = np.clip(res, lo, hi)
    q = np.floor((x - lo) / (hi - lo) * levels).astype(np.intp)
    return np.clip(q, 0, levels - 1)


def glcm(q, distance: int, direction: str, levels: int | None = None) -> np.ndarray:
    """
    Normalized, non-symmetric co-occurrence matrix of ``q``:
    pairs ``(q[r, c], q[r, c + d])`` horizontally, ``(q[r, c], q[r + d, c])``
    vertically.
    """
    q = np.asarray(q)
    if levels is None:
        levels = int(q.max()) + 1
    if direction == HORIZONTAL:
        if distance >= q.shape[1]:
            raise ContractError(f"distance {distance} must be smaller than width {q.shape[1]}")
        a, b = q[:, :-distance], q[:, distance:]
    elif direction == VERTICAL:
        if distance >= q.shape[0]:
            raise ContractError(f"distance {distance} must be smaller than height {q.shape[0]}")
        a, b = q[:-distance, :], q[distance:, :]
    else:
        raise ContractError(f"unknown direction {direction!r}")
    counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels)
    return counts.reshape(levels, levels) / counts.sum()


def haralick5(p) -> np.ndarray:
    """Contrast, homogeneity, dissimilarity, energy and correlation of ``p``."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    i, j = np.indices((n, n), dtype=np.float64)
    diff = i - j
    contrast = float((p * diff ** 2).sum())
    homogeneity = float((p / (1.0 + diff ** 2)).sum())
    dissimilarity = float((p * np.abs(diff)).sum())
    energy = float(np.sqrt((p ** 2).sum()))
    mu_i = (p * i).sum()
    mu_j = (p * j).sum()
    sd_i = np.sqrt((p * (i - mu_i) ** 2).sum())
    sd_j = np.sqrt((p * (j - mu_j) ** 2).sum())
    if sd_i * sd_j < 1e-15:
        correlation = 1.0
    else:
        correlation = float((p * (i - mu_i) * (j - mu_j)).sum() / (sd_i * sd_j))
        correlation = min(1.0, max(-1.0, correlation))
    return np.array([contrast, homogeneity, dissimilarity, energy, correlation])


def glcm_spectrum(p) -> np.ndarray | None:
    """
    Centered DFT magnitude of the zero-mean matrix, renormalized to sum 1.
    Returns ``None`` when the spectrum is identically zero.
    """
    p = np.asarray(p, dtype=np.float64)
    mags = np.abs(np.fft.fftshift(np.fft.fft2(p - p.mean())))
    n = p.shape[0]
    mags[n // 2, n // 2] = 0.0
    total = mags.sum()
    if not total > 1e-15:
        return None
    return mags / total


def glcm_vector(img, method=NoiseMethod.MANDELLI_T, params: TextureParams = TextureParams(),
                **noise_kw) -> FeatureVector:
    method = NoiseMethod.parse(method)
    res = extract(img, method, **noise_kw)
    return FeatureVector(glcm_features_from_residual(res, params), FeatureFamily.GLCM, method)


def fft_glcm_vector(img, method=NoiseMethod.MANDELLI_T, params: TextureParams = TextureParams(),
                    **noise_kw) -> FeatureVector:
    method = NoiseMethod.parse(method)
    res = extract(img, method, **noise_kw)
    return FeatureVector(glcm_features_from_residual(res, params, fourier=True),
                         FeatureFamily.FFT_GLCM, method)


def fft_glcm_stats(p) -> np.ndarray:
    spec = glcm_spectrum(p)
    if spec is None:
        return DEGENERATE_STATS.copy()
    return haralick5(spec)


def glcm_features_from_residual(res, params: TextureParams = TextureParams(), fourier: bool = False):
    q = quantize(res, params.levels)
    stat = fft_glcm_stats if fourier else haralick5
    return np.concatenate([stat(glcm(q, d, direction, params.levels))
                           for direction in params.directions for d in params.distances])
