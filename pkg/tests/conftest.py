import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def checkerboard(n: int) -> np.ndarray:
    """(-1)^(x+y) mapped to {0, 1}."""
    yy, xx = np.indices((n, n))
    return ((xx + yy) % 2).astype(np.float64)


def brute_dft(x: np.ndarray) -> np.ndarray:
    """O(N^4) 2-D DFT straight from the definition."""
    n, m = x.shape
    out = np.zeros((n, m), dtype=complex)
    for u in range(n):
        for v in range(m):
            acc = 0j
            for r in range(n):
                for c in range(m):
                    acc += x[r, c] * np.exp(-2j * np.pi * (u * r / n + v * c / m))
            out[u, v] = acc
    return out


def brute_conv_same(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """
    Direct same-size convolution with half-sample symmetric boundary; kernel
    origin at index ``size // 2`` (scipy.ndimage convention).
    """
    h, w = img.shape
    kh, kw = k.shape
    oy, ox = kh // 2, kw // 2

    def refl(i, n):
        while i < 0 or i >= n:
            i = -i - 1 if i < 0 else 2 * n - i - 1
        return i

    out = np.zeros_like(img, dtype=np.float64)
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    # out[r] = sum_a k[a] img[r - (a - origin)]
                    acc += k[a, b] * img[refl(r - a + oy, h), refl(c - b + ox, w)]
            out[r, c] = acc
    return out


def fixture_images(count: int = 200, size: int = 256):
    """
    ``(path, image, label)`` triples for the five fixture generators, stored
    at 8-bit precision exactly as the PNG corpus would hold them.
    """
    from blotforensics.synthgen import default_specs, generate

    for spec in default_specs(count=count, size=size):
        for seed in spec.seeds():
            img = np.round(generate(spec.generator, spec.size, seed) * 255) / 255
            yield f"{spec.generator}/{seed}.png", img, spec.generator


@pytest.fixture(scope="session")
def peak_table():
    """FFT-PEAKS and PATCH-FFT-PEAKS (bammey-c) for 5 sources x 200 fixtures."""
    from blotforensics.features import extract_table

    return extract_table(fixture_images(), ["FFT-PEAKS", "PATCH-FFT-PEAKS"], ["bammey-c"])
