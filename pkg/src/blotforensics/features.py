"""
Feature extraction front end: one configuration object describing the crop,
the noise extractor and the feature family, plus batch helpers that compute
each residual once and derive every requested family from it.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .core import (ContractError, DatasetManifest, FeatureFamily, FeatureVector, central_crop,
                   load_image)
from .noise import NoiseMethod, extract
from .spectral import (DEFAULT_BANDS, band_name, fft_peaks_from_residual,
                       patch_fft_peaks_from_residual, validate_bands)
from .texture import TextureParams, glcm_features_from_residual

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureConfig:
    family: str = FeatureFamily.PATCH_FFT_PEAKS.value
    method: str = NoiseMethod.BAMMEY_C.value
    crop: int = 256
    patch: int = 64
    bands: Tuple[Tuple[float, float], ...] = tuple(DEFAULT_BANDS)
    glcm_levels: int = 64
    glcm_distances: Tuple[int, ...] = (4, 8, 16, 32)
    cross_mode: str = "direct"
    nlmeans_strength: float = 0.1
    nlmeans_patch: int = 7
    nlmeans_window: int = 21
    pmap_radius: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", FeatureFamily(str(self.family)).value)
        except ValueError:
            names = ", ".join(f.value for f in FeatureFamily)
            raise ContractError(f"unknown feature family {self.family!r}; expected one of {names}") from None
        object.__setattr__(self, "method", NoiseMethod.parse(self.method).value)
        object.__setattr__(self, "bands", tuple(validate_bands([tuple(b) for b in self.bands])))
        object.__setattr__(self, "glcm_distances", tuple(int(d) for d in self.glcm_distances))
        if self.crop % self.patch:
            raise ContractError(f"patch size {self.patch} must divide crop size {self.crop}")
        if max(self.glcm_distances) >= self.crop:
            raise ContractError("GLCM distances must be smaller than the crop size")

    def with_(self, **changes) -> "FeatureConfig":
        data = asdict(self)
        data.update(changes)
        return FeatureConfig(**data)

    @property
    def texture(self) -> TextureParams:
        return TextureParams(distances=self.glcm_distances, levels=self.glcm_levels)

    @property
    def dim(self) -> int:
        if self.family in (FeatureFamily.FFT_PEAKS.value, FeatureFamily.PATCH_FFT_PEAKS.value):
            return len(self.bands)
        return self.texture.dim

    def noise_kwargs(self) -> dict:
        return dict(cross_mode=self.cross_mode, nlmeans_strength=self.nlmeans_strength,
                    nlmeans_patch=self.nlmeans_patch, nlmeans_window=self.nlmeans_window,
                    pmap_radius=self.pmap_radius)

    def feature_names(self) -> List[str]:
        if self.family in (FeatureFamily.FFT_PEAKS.value, FeatureFamily.PATCH_FFT_PEAKS.value):
            return [f"band{band_name(b)}" for b in self.bands]
        return self.texture.feature_names()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["bands"] = [list(b) for b in self.bands]
        data["glcm_distances"] = list(self.glcm_distances)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureConfig":
        data = dict(data)
        if "bands" in data:
            data["bands"] = tuple(tuple(b) for b in data["bands"])
        if "glcm_distances" in data:
            data["glcm_distances"] = tuple(data["glcm_distances"])
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown feature configuration keys: {sorted(unknown)}")
        return cls(**data)


def features_from_residual(res: np.ndarray, config: FeatureConfig) -> np.ndarray:
    family = config.family
    if family == FeatureFamily.FFT_PEAKS.value:
        return fft_peaks_from_residual(res, config.bands)
    if family == FeatureFamily.PATCH_FFT_PEAKS.value:
        return patch_fft_peaks_from_residual(res, config.patch, config.bands)
    if family == FeatureFamily.GLCM.value:
        return glcm_features_from_residual(res, config.texture, fourier=False)
    return glcm_features_from_residual(res, config.texture, fourier=True)


PEAK_FAMILIES = (FeatureFamily.FFT_PEAKS.value, FeatureFamily.PATCH_FFT_PEAKS.value)
LOG_FLOOR = 1e-12


def input_transform(family, classifier: str) -> str:
    """
    Scale at which a classifier sees a family's features: PPCA models the
    log of peak ratios, whose linear values are positive and heavy-tailed
    (a Gaussian density fits them poorly); everything else is used as is.
    """
    if str(classifier) == "ppca" and str(family) in PEAK_FAMILIES:
        return "log"
    return "identity"


def model_input(X: np.ndarray, family, classifier: str) -> np.ndarray:
    """Apply :func:`input_transform` to a feature matrix or vector."""
    X = np.asarray(X, dtype=np.float64)
    if input_transform(family, classifier) == "log":
        return np.log(np.maximum(X, LOG_FLOOR))
    return X


def prepare(img: np.ndarray, config: FeatureConfig) -> np.ndarray:
    return central_crop(img, config.crop)


def extract_features(img: np.ndarray, config: FeatureConfig) -> FeatureVector:
    """Crop, extract the residual and compute one feature vector."""
    res = extract(prepare(img, config), config.method, **config.noise_kwargs())
    return FeatureVector(features_from_residual(res, config), config.family, config.method)


def extract_families(img: np.ndarray, method, families: Sequence[str],
                     base: FeatureConfig = FeatureConfig()) -> Dict[str, np.ndarray]:
    """All requested families from a single residual."""
    cfg = base.with_(method=NoiseMethod.parse(method).value)
    res = extract(prepare(img, cfg), cfg.method, **cfg.noise_kwargs())
    return {fam: features_from_residual(res, cfg.with_(family=fam)) for fam in families}


@dataclass
class FeatureTable:
    """Features for a set of images: ``X[family][method]`` rows follow ``labels``."""

    labels: np.ndarray
    paths: List[str]
    X: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def get(self, family, method) -> np.ndarray:
        return self.X[str(FeatureFamily(str(family)).value)][NoiseMethod.parse(method).value]


def extract_table(images: Iterable[Tuple[str, np.ndarray, str]], families: Sequence[str],
                  methods: Sequence, base: FeatureConfig = FeatureConfig(),
                  progress: bool = False) -> FeatureTable:
    """
    Extract every (family, method) combination for ``(path, image, label)``
    triples.  Residuals are computed once per (image, method).
    """
    families = [FeatureFamily(str(f)).value for f in families]
    methods = [NoiseMethod.parse(m).value for m in methods]
    rows: Dict[str, Dict[str, list]] = {f: {m: [] for m in methods} for f in families}
    labels, paths = [], []
    for i, (path, img, label) in enumerate(images):
        for m in methods:
            feats = extract_families(img, m, families, base)
            for f in families:
                rows[f][m].append(feats[f])
        labels.append(label)
        paths.append(str(path))
        if progress and (i + 1) % 50 == 0:
            print(f"  extracted {i + 1} images", file=sys.stderr)
    X = {f: {m: (np.vstack(rows[f][m]) if rows[f][m] else np.zeros((0, 0))) for m in methods}
         for f in families}
    return FeatureTable(np.array(labels, dtype=object), paths, X)


def iter_manifest(manifest: DatasetManifest, failures: list | None = None):
    """Yield ``(path, image, label)``; decode failures are recorded and skipped."""
    for rel, label in manifest.entries:
        path = manifest.root / rel
        try:
            img = load_image(path)
        except OSError as exc:
            if failures is None:
                raise
            failures.append((str(path), str(exc)))
            log.warning("skipping %s: %s", path, exc)
            continue
        yield rel, img, label
