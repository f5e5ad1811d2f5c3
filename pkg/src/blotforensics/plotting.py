"""
Figure rendering for evaluation reports, plus plain data exports (PGM
heatmaps and CSV matrices) for spectra and co-occurrence matrices.

Figures are written with the non-interactive Agg backend; every function
takes an output path and returns it.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Mapping, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

DPI = 120


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_confusion(report, path) -> Path:
    """Confusion matrix of an :class:`EvalReport` with per-cell counts."""
    cm = np.asarray(report.confusion, dtype=float)
    labels = list(report.labels)
    fig, ax = plt.subplots(figsize=(1.2 * len(labels) + 2.5, 1.1 * len(labels) + 2))
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    im = ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
    for (i, j), v in np.ndenumerate(cm):
        ax.text(j, i, f"{int(v)}", ha="center", va="center",
                color="white" if frac[i, j] > 0.5 else "black", fontsize=9)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=35, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{report.protocol}: {report.family} / {report.method}\nBacc {report.bacc:.3f}",
                 fontsize=10)
    fig.colorbar(im, ax=ax, fraction=0.046, label="row fraction")
    return _save(fig, path)


def plot_roc(report, path) -> Path:
    """ROC curve stored in ``report.curve``."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    fpr = report.curve.get("fpr", [])
    tpr = report.curve.get("tpr", [])
    ax.plot(fpr, tpr, lw=1.8, label=f"AUC {report.auc:.3f}")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="grey")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"{report.protocol}: {report.family} / {report.method}", fontsize=10)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_score_histogram(groups: Mapping[str, Sequence[float]], path, threshold=None,
                         title: str = "") -> Path:
    """
    Overlaid histograms of one-class scores per group.

    :param groups: label -> scores
    :param threshold: optional decision threshold drawn as a vertical line
    """
    fig, ax = plt.subplots(figsize=(6, 3.8))
    finite = [np.asarray(v, dtype=float) for v in groups.values() if len(v)]
    allv = np.concatenate(finite) if finite else np.zeros(1)
    lo, hi = np.percentile(allv, [0.5, 99.5]) if allv.size > 1 else (allv.min() - 1, allv.max() + 1)
    if hi <= lo:
        hi = lo + 1.0
    bins = np.linspace(lo, hi, 40)
    for label, values in groups.items():
        ax.hist(np.clip(values, lo, hi), bins=bins, alpha=0.5, label=str(label))
    if threshold is not None and np.isfinite(threshold):
        ax.axvline(threshold, color="k", ls="--", lw=1, label="threshold")
    ax.set_xlabel("score (higher = more typical of the training source)")
    ax.set_ylabel("count")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_noise_grid(reports, path) -> Path:
    """Grouped bars: one group per feature family, one bar per noise extractor."""
    families = list(dict.fromkeys(r.family for r in reports))
    methods = list(dict.fromkeys(r.method for r in reports))
    value = {(r.family, r.method): r.bacc for r in reports}
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(2.2 * len(families) + 3, 4.2))
    cmap = plt.get_cmap("tab10")
    x = np.arange(len(families))
    for k, m in enumerate(methods):
        heights = [value.get((f, m), np.nan) for f in families]
        ax.bar(x + (k - (len(methods) - 1) / 2) * width, np.nan_to_num(heights), width,
               label=m, color=cmap(k % 10))
    ax.set_xticks(x)
    ax.set_xticklabels(families)
    ax.set_ylim(0, 1)
    ax.set_ylabel("Bacc")
    ax.set_title("one-vs-rest attribution by noise extractor", fontsize=10)
    ax.legend(fontsize=7, ncol=4, loc="upper center", bbox_to_anchor=(0.5, -0.12))
    return _save(fig, path)


def plot_matrix_grid(matrices: Mapping[str, Mapping[str, np.ndarray]], path, log: bool = True) -> Path:
    """
    Grid of heatmaps: rows are quantities (e.g. average spectrum, GLCM),
    columns are sources.

    :param matrices: row name -> (source -> 2-D array)
    :param log: display ``log1p`` of the values
    """
    rows = list(matrices)
    cols = list(dict.fromkeys(c for r in rows for c in matrices[r]))
    fig, axes = plt.subplots(len(rows), len(cols), figsize=(2.2 * len(cols), 2.2 * len(rows)),
                             squeeze=False)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            ax = axes[i, j]
            ax.set_xticks([])
            ax.set_yticks([])
            if c in matrices[r]:
                m = np.asarray(matrices[r][c], dtype=float)
                ax.imshow(np.log1p(np.maximum(m, 0)) if log else m, cmap="magma")
            if i == 0:
                ax.set_title(c, fontsize=8)
            if j == 0:
                ax.set_ylabel(r, fontsize=8)
    return _save(fig, path)


# --------------------------------------------------------------------------
# data exports

def write_pgm(matrix, path, log: bool = True) -> Path:
    """8-bit binary PGM heatmap, min-max scaled (after ``log1p`` if requested)."""
    m = np.asarray(matrix, dtype=np.float64)
    if log:
        m = np.log1p(np.maximum(m, 0.0))
    lo, hi = float(m.min()), float(m.max())
    scaled = np.zeros(m.shape) if hi <= lo else (m - lo) / (hi - lo)
    data = np.round(scaled * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())
    return path


def write_matrix_csv(matrix, path) -> Path:
    """Row-major CSV of a 2-D array, full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(matrix, dtype=np.float64):
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def average_maps(images_by_source: Mapping[str, Sequence[np.ndarray]], config) -> Dict[str, Dict[str, np.ndarray]]:
    """
    Per-source averages of the patch spectrum, the full-image spectrum, the
    GLCM at the first distance and its Fourier magnitude (horizontal
    direction), for side-by-side comparison of generator fingerprints.
    """
    from .noise import extract
    from .features import prepare
    from .spectral import fft_magnitude, patch_average_spectrum
    from .texture import HORIZONTAL, glcm, glcm_spectrum, quantize

    out: Dict[str, Dict[str, np.ndarray]] = {"patch spectrum": {}, "spectrum": {}, "GLCM": {},
                                             "FFT-GLCM": {}}
    d = config.glcm_distances[0]
    for source, images in images_by_source.items():
        acc = {k: [] for k in out}
        for img in images:
            res = extract(prepare(img, config), config.method, **config.noise_kwargs())
            acc["patch spectrum"].append(patch_average_spectrum(res, config.patch))
            acc["spectrum"].append(fft_magnitude(res))
            m = glcm(quantize(res, config.glcm_levels), d, HORIZONTAL, config.glcm_levels)
            acc["GLCM"].append(m)
            spec = glcm_spectrum(m)
            acc["FFT-GLCM"].append(np.zeros_like(m) if spec is None else spec)
        for k in out:
            out[k][source] = np.mean(acc[k], axis=0)
    return out
