"""
Deterministic blot-like fixtures.

Two pristine sources (clean and post-processed) and three synthetic sources,
each carrying a different upsampling artifact:

* ``deconv-checkerboard``: stride-2 transposed convolution with a 3x3 kernel
  (kernel size not divisible by the stride, so output phases overlap unevenly)
* ``resize-conv``: nearest-neighbour x2 resize followed by a 3x3 convolution
* ``smooth-upsample``: bilinear x2 resize plus spatially correlated noise

Every generator is a pure function of ``(size, seed)``.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .core import ContractError, DatasetManifest, save_image


class Generator(str, Enum):
    PRISTINE_CLEAN = "pristine-clean"
    PRISTINE_PROCESSED = "pristine-processed"
    DECONV_CHECKERBOARD = "deconv-checkerboard"
    RESIZE_CONV = "resize-conv"
    SMOOTH_UPSAMPLE = "smooth-upsample"

    def __str__(self) -> str:
        return self.value


PRISTINE_GENERATORS = (Generator.PRISTINE_CLEAN, Generator.PRISTINE_PROCESSED)
SYNTHETIC_GENERATORS = (Generator.DECONV_CHECKERBOARD, Generator.RESIZE_CONV, Generator.SMOOTH_UPSAMPLE)
ALL_GENERATORS = PRISTINE_GENERATORS + SYNTHETIC_GENERATORS

NOISE_SIGMA = 0.02

# JPEG luminance quantization table (quality 50 baseline)
_JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def jpeg_table(quality: int = 75) -> np.ndarray:
    """IJG scaling of the baseline luminance table."""
    quality = int(np.clip(quality, 1, 100))
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((_JPEG_LUMA * scale + 50) / 100), 1, 255)


def block_dct_quantize(img: np.ndarray, quality: int = 75) -> np.ndarray:
    """JPEG-like 8x8 block DCT quantization of a [0, 1] image (sides multiple of 8)."""
    h, w = img.shape
    if h % 8 or w % 8:
        raise ContractError("block DCT quantization needs sides divisible by 8")
    q = jpeg_table(quality)
    x = img * 255.0 - 128.0
    blocks = x.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / q) * q
    out = idctn(coef, axes=(-2, -1), norm="ortho")
    out = out.transpose(0, 2, 1, 3).reshape(h, w)
    return np.clip(np.round(out + 128.0), 0, 255) / 255.0


def _render_blot(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """Noise-free blot scene: lit background with 2-6 dark horizontal bands; returns (scene, band count)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    base = rng.uniform(0.78, 0.92)
    gx, gy = rng.uniform(-0.08, 0.08, size=2)
    img = base + gx * (xx - 0.5) + gy * (yy - 0.5)

    n_bands = int(rng.integers(2, 7))
    for _ in range(n_bands):
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        half_w = rng.uniform(0.06, 0.2)
        sig_y = rng.uniform(0.008, 0.03)
        depth = rng.uniform(0.2, 0.6)
        smile = rng.uniform(-0.15, 0.15)
        dy = yy - cy - smile * (xx - cx) ** 2
        # super-Gaussian profile along the lane gives flat-topped bands
        prof_x = np.exp(-np.abs((xx - cx) / half_w) ** 4)
        prof_y = np.exp(-0.5 * (dy / sig_y) ** 2)
        img -= depth * prof_x * prof_y
    return img, n_bands


def blot_scene(size: int = 256, seed: int = 0) -> Tuple[np.ndarray, int]:
    """The noise-free scene behind ``gen_pristine(size, seed)`` and its band count."""
    return _render_blot(size, np.random.default_rng([seed, 0x5EED]))


def gen_pristine(size: int = 256, seed: int = 0, processed: bool = False) -> np.ndarray:
    """
    Pristine blot: rendered bands plus i.i.d. Gaussian noise (sigma 0.02).
    ``processed`` adds JPEG-like block quantization (quality 75) and a 0.9
    gamma, emulating figures prepared for publication.
    """
    if size < 64:
        raise ContractError("pristine fixtures need size >= 64")
    return _pristine(size, seed, processed)


def _pristine(size: int, seed: int, processed: bool = False) -> np.ndarray:
    rng = np.random.default_rng([seed, 0x5EED])
    img, _ = _render_blot(size, rng)
    img = img + rng.normal(0.0, NOISE_SIGMA, size=(size, size))
    img = np.clip(img, 0.0, 1.0)
    if processed:
        img = block_dct_quantize(img, 75)
        img = np.clip(img, 0.0, 1.0) ** 0.9
    return img


def _latent(size: int, seed: int) -> np.ndarray:
    if size % 2:
        raise ContractError("synthetic fixtures need an even size")
    return _pristine(size // 2, seed)


def _unit_kernel(rng: np.random.Generator) -> np.ndarray:
    k = rng.uniform(0.0, 1.0, size=(3, 3))
    return k / k.sum()


def transposed_conv(latent: np.ndarray, kernel: np.ndarray, stride: int = 2) -> np.ndarray:
    """Transposed convolution, cropped to ``stride`` times the latent size."""
    n, m = latent.shape
    kh, kw = kernel.shape
    out = np.zeros(((n - 1) * stride + kh, (m - 1) * stride + kw))
    for a in range(kh):
        for b in range(kw):
            out[a:a + (n - 1) * stride + 1:stride, b:b + (m - 1) * stride + 1:stride] += kernel[a, b] * latent
    return out[:n * stride, :m * stride]


def _rescale(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def gen_deconv_checkerboard(size: int = 256, seed: int = 0, stride: int = 2) -> np.ndarray:
    """
    Stride-2 transposed convolution of a half-size pristine latent with a
    seeded 3x3 kernel; ``stride=1`` gives the artifact-free ablation.
    """
    rng = np.random.default_rng([seed, 0xDEC0])
    kernel = _unit_kernel(rng)
    if stride == 2:
        out = transposed_conv(_latent(size, seed), kernel, 2)
    elif stride == 1:
        out = transposed_conv(_pristine(size, seed), kernel, 1)
    else:
        raise ContractError("stride must be 1 or 2")
    return _rescale(out)


def gen_resize_conv(size: int = 256, seed: int = 0) -> np.ndarray:
    """Nearest-neighbour x2 upsampling of a half-size latent, then a seeded 3x3 convolution."""
    rng = np.random.default_rng([seed, 0x2E51])
    kernel = _unit_kernel(rng)
    up = np.repeat(np.repeat(_latent(size, seed), 2, axis=0), 2, axis=1)
    return np.clip(ndimage.convolve(up, kernel, mode="reflect"), 0.0, 1.0)


def bilinear_upsample2(img: np.ndarray) -> np.ndarray:
    """x2 bilinear upsampling with half-pixel alignment and mirrored edges."""
    def up_axis(a, axis):
        a = np.moveaxis(a, axis, 0)
        prev = np.concatenate([a[:1], a[:-1]], axis=0)
        nxt = np.concatenate([a[1:], a[-1:]], axis=0)
        out = np.empty((2 * a.shape[0],) + a.shape[1:])
        out[0::2] = 0.75 * a + 0.25 * prev
        out[1::2] = 0.75 * a + 0.25 * nxt
        return np.moveaxis(out, 0, axis)
    return up_axis(up_axis(img, 0), 1)


def gen_smooth_upsample(size: int = 256, seed: int = 0) -> np.ndarray:
    """Bilinear x2 upsampling of a half-size latent plus 3x3 mean-filtered noise."""
    rng = np.random.default_rng([seed, 0x5300])
    up = bilinear_upsample2(_latent(size, seed))
    noise = ndimage.uniform_filter(rng.normal(0.0, 3.0 * NOISE_SIGMA, size=up.shape), 3, mode="reflect")
    return np.clip(up + noise, 0.0, 1.0)


def generate(generator, size: int = 256, seed: int = 0) -> np.ndarray:
    generator = Generator(str(generator))
    if generator is Generator.PRISTINE_CLEAN:
        return gen_pristine(size, seed, processed=False)
    if generator is Generator.PRISTINE_PROCESSED:
        return gen_pristine(size, seed, processed=True)
    if generator is Generator.DECONV_CHECKERBOARD:
        return gen_deconv_checkerboard(size, seed)
    if generator is Generator.RESIZE_CONV:
        return gen_resize_conv(size, seed)
    return gen_smooth_upsample(size, seed)


@dataclass(frozen=True)
class FixtureSpec:
    generator: str
    count: int = 200
    size: int = 256
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "generator", Generator(str(self.generator)).value)
        except ValueError:
            names = ", ".join(g.value for g in Generator)
            raise ContractError(f"unknown generator {self.generator!r}; expected one of {names}") from None
        if self.size % 2:
            raise ContractError("fixture size must be even")
        if self.size < 64:
            raise ContractError("fixture size must be >= 64")
        if self.count < 0:
            raise ContractError("count must be >= 0")

    def seeds(self) -> range:
        return range(self.seed, self.seed + self.count)


def default_specs(count: int = 200, size: int = 256, seed: int = 0,
                  generators: Iterable = ALL_GENERATORS) -> List[FixtureSpec]:
    """One spec per generator, each with a disjoint seed range."""
    return [FixtureSpec(str(g), count, size, seed + 100_000 * i)
            for i, g in enumerate(ALL_GENERATORS) if g in {Generator(str(x)) for x in generators}]


def load_specs(path) -> List[FixtureSpec]:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("specs", [])
    return [FixtureSpec(**item) for item in data]


def gen_corpus(specs: Sequence[FixtureSpec], out_dir) -> DatasetManifest:
    """
    Write ``{generator}/{seed}.png`` for every spec and a ``manifest.json``.
    Rerunning with the same specs rewrites byte-identical files.  On failure
    the files written by this call are removed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    entries = []
    try:
        for spec in specs:
            sub = out_dir / spec.generator
            sub.mkdir(exist_ok=True)
            for s in spec.seeds():
                rel = f"{spec.generator}/{s}.png"
                target = out_dir / rel
                fd, tmp = tempfile.mkstemp(suffix=".png", dir=sub)
                os.close(fd)
                try:
                    save_image(generate(spec.generator, spec.size, s), tmp)
                    os.replace(tmp, target)
                finally:
                    if os.path.exists(tmp):
                        os.remove(tmp)
                written.append(target)
                entries.append((rel, spec.generator))
        manifest = DatasetManifest(out_dir, entries)
        with open(out_dir / "fixtures.json", "w") as fh:
            json.dump([asdict(s) for s in specs], fh, indent=1)
        to_save = DatasetManifest(Path("."), entries)
        to_save.save(out_dir / "manifest.json")
    except BaseException:
        for p in written:
            if p.exists():
                p.unlink()
        for spec in specs:
            sub = out_dir / spec.generator
            if sub.is_dir() and not any(sub.iterdir()):
                shutil.rmtree(sub, ignore_errors=True)
        raise
    return manifest
