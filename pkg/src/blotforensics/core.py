"""
Shared plumbing: gray images, dataset manifests and feature files.

Images are plain 2-D ``float64`` numpy arrays with values in [0, 1];
residuals and spectra are 2-D arrays of the same kind without the range
restriction.  Feature vectors carry a tag naming the feature family and the
noise extractor that produced them.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SUPPORTED_FORMATS = {"PNG", "TIFF", "PPM"}

PRISTINE = "pristine"


class ContractError(ValueError):
    """A precondition or invariant of an operation was violated."""


class ImageDecodeError(OSError):
    """An image file exists but could not be decoded."""

    def __init__(self, path, reason: str = ""):
        self.path = str(path)
        msg = f"cannot decode image {self.path}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class UnsupportedFormatError(ImageDecodeError):
    """The image decoded but its container format is not accepted."""


class FeatureFamily(str, Enum):
    FFT_PEAKS = "FFT-PEAKS"
    PATCH_FFT_PEAKS = "PATCH-FFT-PEAKS"
    GLCM = "GLCM"
    FFT_GLCM = "FFT-GLCM"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length feature vector tagged with its family and extractor."""

    values: np.ndarray
    family: str
    extractor: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "family", str(self.family))
        object.__setattr__(self, "extractor", str(self.extractor))

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.family == other.family and self.extractor == other.extractor
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.family, self.extractor, self.values.tobytes()))


def as_gray(data, copy: bool = False) -> np.ndarray:
    """Validate ``data`` as a gray image: 2-D, nonempty, finite, in [0, 1]."""
    arr = np.array(data, dtype=np.float64, copy=copy)
    if arr.ndim != 2 or arr.size == 0:
        raise ContractError(f"gray image must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError("gray image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractError("gray image values must lie in [0, 1]")
    return arr


def _to_unit_range(arr: np.ndarray, path) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.dtype(">u2"), np.dtype("<u2")):
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.bool_:
        return arr.astype(np.float64)
    if np.issubdtype(arr.dtype, np.integer):
        # PIL mode "I" holds 16-bit data promoted to int32
        if arr.min() < 0 or arr.max() > 65535:
            raise ImageDecodeError(path, f"integer pixel values outside 16-bit range")
        scale = 255.0 if arr.max() <= 255 and arr.dtype.itemsize == 1 else 65535.0
        return arr.astype(np.float64) / scale
    if np.issubdtype(arr.dtype, np.floating):
        out = arr.astype(np.float64)
        if out.min() < 0.0 or out.max() > 1.0:
            raise ImageDecodeError(path, "floating-point pixels outside [0, 1]")
        return out
    raise ImageDecodeError(path, f"unsupported pixel type {arr.dtype}")


def load_image(path) -> np.ndarray:
    """
    Read a PNG, TIFF (8/16-bit) or PGM/PPM file as a gray image in [0, 1].

    Color inputs are converted to luminance with BT.601 weights.

    :param path: image file path
    :return: 2-D float64 array
    :raises FileNotFoundError: when the file is missing
    :raises ImageDecodeError: when the file cannot be decoded
    :raises UnsupportedFormatError: for formats other than PNG/TIFF/PGM
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise UnsupportedFormatError(path, f"format {fmt!r} is not one of PNG, TIFF, PGM")
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            if mode in ("LA", "RGBA"):
                im = im.convert(mode[:-1])
                mode = im.mode
            if mode == "CMYK" or mode == "YCbCr":
                im = im.convert("RGB")
                mode = "RGB"
            arr = np.array(im)
    except ImageDecodeError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(path, str(exc)) from exc

    if arr.ndim == 3:
        rgb = _to_unit_range(arr[..., :3], path)
        w = LUMA_WEIGHTS
        gray = w[0] * rgb[..., 0] + w[1] * rgb[..., 1] + w[2] * rgb[..., 2]
        # gray pixels must map back to themselves exactly
        same = (rgb[..., 0] == rgb[..., 1]) & (rgb[..., 1] == rgb[..., 2])
        gray = np.where(same, rgb[..., 0], gray)
        return np.clip(gray, 0.0, 1.0)
    if arr.ndim != 2:
        raise ImageDecodeError(path, f"unexpected array shape {arr.shape}")
    return _to_unit_range(arr, path)


def save_image(img: np.ndarray, path, bits: int = 8) -> None:
    """Write a [0, 1] image as a gray PNG (8 or 16 bit)."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        Image.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L").save(path)
    elif bits == 16:
        Image.fromarray(np.round(img * 65535.0).astype(np.uint16)).save(path)
    else:
        raise ContractError("bits must be 8 or 16")


def central_crop(img: np.ndarray, size: int = 256) -> np.ndarray:
    """
    Centered ``size`` x ``size`` crop.  Dimensions shorter than ``size`` are
    first padded symmetrically by mirror reflection.
    """
    if size < 16:
        raise ContractError(f"crop size must be >= 16, got {size}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ContractError("central_crop expects a 2-D image")
    index = []
    for n in img.shape:
        if n >= size:
            start = (n - size) // 2
            index.append(np.arange(start, start + size))
        else:
            # half-sample symmetric extension of period 2n, image centered
            i = np.mod(np.arange(size) - (size - n) // 2, 2 * n)
            index.append(np.where(i < n, i, 2 * n - 1 - i))
    return img[np.ix_(index[0], index[1])].copy()


# --------------------------------------------------------------------------
# dataset manifests

@dataclass
class DatasetManifest:
    """A list of (relative path, label) pairs under a root directory."""

    root: Path
    entries: List[Tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        self.entries = [(str(p), str(lbl)) for p, lbl in self.entries]

    @property
    def labels(self) -> List[str]:
        """Distinct labels in order of first appearance."""
        seen = {}
        for _, lbl in self.entries:
            seen.setdefault(lbl, None)
        return list(seen)

    def paths(self, label: str | None = None) -> List[Path]:
        return [self.root / p for p, lbl in self.entries if label is None or lbl == label]

    def subset(self, labels: Iterable[str]) -> "DatasetManifest":
        keep = set(labels)
        return DatasetManifest(self.root, [e for e in self.entries if e[1] in keep])

    def validate(self, declared_labels: Sequence[str] | None = None) -> None:
        missing = [p for p, _ in self.entries if not (self.root / p).exists()]
        if missing:
            raise FileNotFoundError(f"{len(missing)} manifest entries missing, first: {self.root / missing[0]}")
        if declared_labels is not None:
            empty = [lbl for lbl in declared_labels if lbl not in set(self.labels)]
            if empty:
                raise ContractError(f"no entries for declared labels: {', '.join(empty)}")

    def to_dict(self) -> dict:
        return {"root": str(self.root), "entries": [{"path": p, "label": lbl} for p, lbl in self.entries]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "DatasetManifest":
        try:
            root = Path(data["root"])
            entries = [(e["path"], e["label"]) for e in data["entries"]]
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed manifest: {exc}") from exc
        if base_dir is not None and not root.is_absolute():
            root = Path(base_dir) / root
        return cls(root, entries)

    @classmethod
    def load(cls, path, validate: bool = True) -> "DatasetManifest":
        path = Path(path)
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ContractError(f"manifest {path} is not valid JSON: {exc}") from exc
        manifest = cls.from_dict(data, base_dir=path.parent)
        if validate:
            manifest.validate()
        return manifest


# --------------------------------------------------------------------------
# feature files

_FEATURE_HEADER = ["label", "extractor", "family"]


def save_features(rows: Sequence[Tuple[FeatureVector, str]], path) -> None:
    """
    Write labelled feature vectors as CSV with header
    ``label,extractor,family,v0..vN``.  Floats are written with ``repr`` so a
    load returns bit-identical values.
    """
    rows = list(rows)
    dims = {fv.dim for fv, _ in rows}
    families = {fv.family for fv, _ in rows}
    if len(dims) > 1:
        raise ContractError(f"mixed feature dimensions {sorted(dims)}")
    if len(families) > 1:
        raise ContractError(f"mixed feature families {sorted(families)}")
    for i, (fv, _) in enumerate(rows):
        if not fv.is_finite():
            raise ContractError(f"feature vector {i} contains non-finite values")
    dim = dims.pop() if dims else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FEATURE_HEADER + [f"v{i}" for i in range(dim)])
        for fv, label in rows:
            writer.writerow([label, fv.extractor, fv.family] + [repr(float(v)) for v in fv.values])


def load_features(path) -> List[Tuple[FeatureVector, str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"feature file {path} is empty (no header)")
        if header[:3] != _FEATURE_HEADER:
            raise ContractError(f"feature file {path} has unexpected header {header[:3]}")
        dim = len(header) - 3
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 3:
                raise ContractError(f"{path}:{lineno}: expected {dim + 3} columns, got {len(row)}")
            values = np.array([float(v) for v in row[3:]], dtype=np.float64)
            out.append((FeatureVector(values, row[2], row[1]), row[0]))
    return out


def feature_matrix(rows: Sequence[Tuple[FeatureVector, str]]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack labelled vectors into ``(X, y)``."""
    if not rows:
        return np.zeros((0, 0)), np.array([], dtype=object)
    X = np.vstack([fv.values for fv, _ in rows])
    y = np.array([lbl for _, lbl in rows], dtype=object)
    return X, y


def stable_seed(*parts) -> int:
    """Deterministic 32-bit seed from arbitrary printable parts."""
    import zlib
    return zlib.crc32("|".join(str(p) for p in parts).encode()) & 0x7FFFFFFF


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def isclose_sum(value: float, target: float, tol: float = 1e-9) -> bool:
    return math.isclose(value, target, rel_tol=0.0, abs_tol=tol)
