"""
Fourier peak features of residuals: FFT-PEAKS over the full residual and
PATCH-FFT-PEAKS over the average spectrum of non-overlapping tiles.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from .core import ContractError, FeatureFamily, FeatureVector
from .noise import NoiseMethod, extract

MEDIAN_EPS = 1e-12

Band = Tuple[float, float]


def default_bands() -> List[Band]:
    """
    All (fx, fy) with fx, fy in {0, +-1/4, +-1/3, +-1/2}, without (0, 0) and
    with one representative per conjugate pair: 24 bands.
    """
    grid = [Fraction(0), Fraction(1, 4), Fraction(-1, 4), Fraction(1, 3), Fraction(-1, 3),
            Fraction(1, 2), Fraction(-1, 2)]
    bands = []
    for fy in sorted(grid):
        for fx in sorted(grid):
            if fy > 0 or (fy == 0 and fx > 0):
                bands.append((float(fx), float(fy)))
    return bands


DEFAULT_BANDS = default_bands()


def validate_bands(bands: Sequence[Band]) -> List[Band]:
    out = []
    seen = set()
    for fx, fy in bands:
        fx, fy = float(fx), float(fy)
        if not (-0.5 <= fx <= 0.5 and -0.5 <= fy <= 0.5):
            raise ContractError(f"band ({fx}, {fy}) outside [-1/2, 1/2]")
        if fx == 0.0 and fy == 0.0:
            raise ContractError("band (0, 0) is the DC component and is not allowed")
        if (fx, fy) in seen:
            raise ContractError(f"duplicate band ({fx}, {fy})")
        seen.add((fx, fy))
        out.append((fx, fy))
    if not out:
        raise ContractError("band set is empty")
    return out


def parse_bands(text: str) -> List[Band]:
    """Parse ``"1/2,1/2;1/4,0"`` into a band list (pairs split by ``;``)."""
    bands = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ContractError(f"band {chunk!r} must be 'fx,fy'")
        try:
            bands.append((float(Fraction(parts[0].strip())), float(Fraction(parts[1].strip()))))
        except (ValueError, ZeroDivisionError) as exc:
            raise ContractError(f"cannot parse band {chunk!r}: {exc}") from None
    return validate_bands(bands)


def band_name(band: Band) -> str:
    def fmt(v):
        f = Fraction(v).limit_denominator(64)
        return str(f)
    return f"({fmt(band[0])},{fmt(band[1])})"


def _centered_magnitudes(tiles: np.ndarray) -> np.ndarray:
    """Centered DFT magnitudes of a stack of square tiles, each made zero-mean."""
    tiles = tiles - tiles.mean(axis=(-2, -1), keepdims=True)
    mags = np.abs(np.fft.fftshift(np.fft.fft2(tiles), axes=(-2, -1)))
    n = tiles.shape[-1]
    mags[..., n // 2, n // 2] = 0.0
    return mags


def _tiles(res: np.ndarray, patch: int) -> np.ndarray:
    n = res.shape[0]
    k = n // patch
    return res.reshape(k, patch, k, patch).transpose(0, 2, 1, 3).reshape(k * k, patch, patch)


def _check_square(res) -> np.ndarray:
    res = np.asarray(res, dtype=np.float64)
    if res.ndim != 2 or res.shape[0] != res.shape[1] or res.size == 0:
        raise ContractError(f"spectral analysis needs a square residual, got shape {res.shape}")
    if not np.all(np.isfinite(res)):
        raise ContractError("residual contains non-finite values")
    return res


def fft_magnitude(res) -> np.ndarray:
    """
    Centered DFT magnitude of the zero-mean residual; index ``(n//2, n//2)``
    is frequency (0, 0) and is set to exactly 0.
    """
    res = _check_square(res)
    return _centered_magnitudes(res[None])[0]


def patch_average_spectrum(res, patch: int) -> np.ndarray:
    """Mean of the centered magnitude spectra of non-overlapping tiles."""
    res = _check_square(res)
    n = res.shape[0]
    if patch < 1 or n % patch != 0:
        valid = [d for d in range(2, n + 1) if n % d == 0]
        raise ContractError(f"patch size {patch} does not divide {n}; valid sizes: {valid}")
    mags = _centered_magnitudes(_tiles(res, patch))
    # fixed-order accumulation keeps the result independent of tiling order
    acc = np.zeros(mags.shape[1:])
    for m in mags:
        acc += m
    return acc / mags.shape[0]


def band_bin(n: int, f: float) -> int:
    """Array index of normalized frequency ``f`` in a centered spectrum of size ``n``."""
    return int((n // 2 + int(np.floor(f * n + 0.5))) % n)


def band_features(spec, bands: Sequence[Band] = DEFAULT_BANDS) -> np.ndarray:
    """
    Peak-to-median ratio at each band: the maximum magnitude in the 3x3
    neighbourhood (wrapping) of the band's nearest bin, divided by the median
    of the nonzero magnitudes.  ``fx`` indexes columns, ``fy`` rows.
    """
    spec = np.asarray(spec, dtype=np.float64)
    n = spec.shape[0]
    out = np.zeros(len(bands))
    nz = spec[spec > 0]
    if nz.size == 0:
        return out
    scale = float(np.median(nz)) + MEDIAN_EPS
    for i, (fx, fy) in enumerate(bands):
        r = band_bin(n, fy)
        c = band_bin(n, fx)
        rows = [(r + d) % n for d in (-1, 0, 1)]
        cols = [(c + d) % n for d in (-1, 0, 1)]
        out[i] = spec[np.ix_(rows, cols)].max() / scale
    return out


def fft_peaks_from_residual(res, bands=DEFAULT_BANDS) -> np.ndarray:
    return band_features(fft_magnitude(res), bands)


def patch_fft_peaks_from_residual(res, patch: int = 64, bands=DEFAULT_BANDS) -> np.ndarray:
    return band_features(patch_average_spectrum(res, patch), bands)


def fft_peaks(img, method=NoiseMethod.BAMMEY_C, bands=DEFAULT_BANDS, **noise_kw) -> FeatureVector:
    method = NoiseMethod.parse(method)
    res = extract(img, method, **noise_kw)
    return FeatureVector(fft_peaks_from_residual(res, bands), FeatureFamily.FFT_PEAKS, method)


def patch_fft_peaks(img, method=NoiseMethod.BAMMEY_C, patch: int = 64, bands=DEFAULT_BANDS,
                    **noise_kw) -> FeatureVector:
    method = NoiseMethod.parse(method)
    res = extract(img, method, **noise_kw)
    return FeatureVector(patch_fft_peaks_from_residual(res, patch, bands),
                         FeatureFamily.PATCH_FFT_PEAKS, method)
