"""
Evaluation protocols: closed-set (random forest), open-set (one-class model
trained on one pristine source) and one-vs-rest attribution (one one-class
model per source), plus the noise-extractor grid over feature families.
"""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..classify import UNKNOWN, fit_one_class, rf_fit, score_matrix
from ..core import ContractError, stable_seed
from ..features import model_input
from .metrics import (auc_micro, balanced_accuracy, best_threshold_bacc, confusion_matrix,
                      roc_auc)

log = logging.getLogger(__name__)

REPORT_FORMAT = "blot-forensics-report/1"
GRID_COLUMNS = ["family", "method", "classifier", "fold", "bacc", "auc", "seconds"]


@dataclass
class EvalReport:
    protocol: str
    family: str
    method: str
    classifier: str
    bacc: float
    auc: float
    labels: List[str]
    confusion: List[List[int]]
    folds: List[dict] = field(default_factory=list)
    curve: Dict[str, List[float]] = field(default_factory=dict)
    seconds: float = 0.0
    seed: int = 0
    notes: List[str] = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["format"] = REPORT_FORMAT
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        data = dict(data)
        if data.pop("format", REPORT_FORMAT) != REPORT_FORMAT:
            raise ContractError("unsupported report format")
        return cls(**data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def summary(self) -> str:
        lines = [f"protocol   {self.protocol}",
                 f"features   {self.family} / {self.method}",
                 f"classifier {self.classifier}",
                 f"Bacc       {self.bacc!r}",
                 f"AUC        {self.auc!r}"]
        for f in self.folds:
            lines.append(f"  fold {f['fold']}: Bacc {f['bacc']!r}  AUC {f['auc']!r}")
        return "\n".join(lines)


def roc_points(binary_labels, scores, max_points: int = 200) -> Dict[str, List[float]]:
    """ROC curve (FPR, TPR) sampled at up to ``max_points`` thresholds."""
    y = np.asarray(binary_labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    thr = np.unique(s)[::-1]
    if thr.size > max_points:
        thr = thr[np.linspace(0, thr.size - 1, max_points).round().astype(int)]
    n_pos, n_neg = max(int(y.sum()), 1), max(int((~y).sum()), 1)
    fpr = [0.0] + [float(((s >= t) & ~y).sum() / n_neg) for t in thr] + [1.0]
    tpr = [0.0] + [float(((s >= t) & y).sum() / n_pos) for t in thr] + [1.0]
    return {"fpr": fpr, "tpr": tpr}


def _stratified_parts(y: np.ndarray, folds: int, rng: np.random.Generator) -> List[np.ndarray]:
    parts: List[list] = [[] for _ in range(folds)]
    for c in sorted(set(y.tolist()), key=str):
        idx = np.nonzero(y == c)[0]
        idx = idx[rng.permutation(idx.size)]
        for f, chunk in enumerate(np.array_split(idx, folds)):
            parts[f].extend(chunk.tolist())
    return [np.sort(np.asarray(p, dtype=np.intp)) for p in parts]


def _equalize(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, notes: list):
    classes, counts = np.unique(y.astype(str), return_counts=True)
    if counts.min() == counts.max():
        return X, y
    m = int(counts.min())
    msg = f"unequal source counts {dict(zip(classes.tolist(), counts.tolist()))}; downsampling to {m}"
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    notes.append(msg)
    keep = []
    for c in classes:
        idx = np.nonzero(y.astype(str) == c)[0]
        keep.extend(np.sort(rng.choice(idx, size=m, replace=False)).tolist())
    keep = np.sort(np.asarray(keep))
    return X[keep], y[keep]


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ContractError("features and labels do not line up")
    return X, y


# --------------------------------------------------------------------------

def closed_set(X, y, *, family: str = "", method: str = "", folds: int = 2, seed: int = 0,
               n_trees: int = 100, shuffle_labels: bool = False,
               resubstitution: bool = False) -> EvalReport:
    """
    Stratified ``folds``-fold cross-validation of a random forest (two folds:
    train on one half of every source, test on the other, then swap).
    ``resubstitution`` trains and tests on all data (diagnostic only).
    """
    t0 = time.perf_counter()
    X, y = _check_xy(X, y)
    notes: List[str] = []
    rng = np.random.default_rng(seed)
    classes = sorted(set(y.tolist()), key=str)
    if len(classes) < 2:
        raise ContractError("closed-set evaluation needs at least two sources")
    X, y = _equalize(X, y, rng, notes)
    if shuffle_labels:
        y = y[rng.permutation(y.size)]
        notes.append("labels shuffled (chance-level control)")
    if folds < 2 and not resubstitution:
        raise ContractError("closed-set evaluation needs folds >= 2")

    if resubstitution:
        splits = [(np.arange(y.size), np.arange(y.size))]
        notes.append("resubstitution: train and test sets are identical")
    else:
        parts = _stratified_parts(y, folds, rng)
        splits = [(np.sort(np.concatenate([p for j, p in enumerate(parts) if j != f])), parts[f])
                  for f in range(folds)]

    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    fold_rows = []
    all_true, all_scores = [], []
    for f, (train, test) in enumerate(splits):
        model = rf_fit(X[train], y[train], n_trees=n_trees, seed=seed + 1000 * f)
        proba = model.predict_proba(X[test])
        # align probability columns with the global class list
        cols = np.zeros((test.size, len(classes)))
        for j, c in enumerate(model.classes):
            cols[:, classes.index(c)] = proba[:, j]
        pred = np.asarray(classes, dtype=object)[np.argmax(cols, axis=1)]
        bacc = balanced_accuracy(y[test], pred)
        auc = auc_micro(y[test], cols, classes)
        cm += confusion_matrix(y[test], pred, classes)
        fold_rows.append({"fold": f, "bacc": bacc, "auc": auc, "n_train": int(train.size),
                          "n_test": int(test.size)})
        all_true.append(y[test])
        all_scores.append(cols)
    yt = np.concatenate(all_true)
    sc = np.vstack(all_scores)
    onehot = np.column_stack([yt == c for c in classes]).ravel()
    return EvalReport("closed-set", str(family), str(method), "rf",
                      float(np.mean([r["bacc"] for r in fold_rows])),
                      float(np.mean([r["auc"] for r in fold_rows])),
                      [str(c) for c in classes], cm.tolist(), fold_rows,
                      roc_points(onehot, sc.ravel()), time.perf_counter() - t0, seed, notes)


def open_set(sources: Mapping[str, np.ndarray], pristine_a: str, pristine_b: str,
             synthetic: Sequence[str], *, classifier: str = "ppca", family: str = "", method: str = "",
             seed: int = 0) -> EvalReport:
    """
    One-class model trained on one pristine source; tested on the other
    pristine source (positives) plus one half of every synthetic source
    (negatives).  The second fold swaps the pristine sources and uses the
    other synthetic half.  Bacc is taken at its best threshold; AUC is
    computed on the raw scores.  Features pass through
    :func:`~blotforensics.features.model_input` first.
    """
    t0 = time.perf_counter()
    if pristine_a not in sources or pristine_b not in sources:
        raise ContractError("open-set evaluation needs two pristine sources")
    if pristine_a == pristine_b:
        raise ContractError("the two pristine sources must differ")
    synthetic = list(synthetic)
    if not synthetic:
        raise ContractError("open-set evaluation needs at least one synthetic source")
    sources = {s: model_input(sources[s], family, classifier)
               for s in [pristine_a, pristine_b] + synthetic}
    rng = np.random.default_rng(seed)
    halves = {}
    for s in synthetic:
        n = np.asarray(sources[s]).shape[0]
        perm = rng.permutation(n)
        halves[s] = (np.sort(perm[: n // 2]), np.sort(perm[n // 2:]))

    labels = ["pristine", "synthetic"]
    cm = np.zeros((2, 2), dtype=np.int64)
    fold_rows = []
    all_y, all_s = [], []
    for f, (train_src, test_src) in enumerate([(pristine_a, pristine_b), (pristine_b, pristine_a)]):
        Xtr = np.asarray(sources[train_src], dtype=np.float64)
        model = fit_one_class(classifier, Xtr, seed=seed + 1000 * f)
        Xpos = np.asarray(sources[test_src], dtype=np.float64)
        Xneg = np.vstack([np.asarray(sources[s], dtype=np.float64)[halves[s][f]] for s in synthetic])
        s_pos = model.score_samples(Xpos)
        s_neg = model.score_samples(Xneg)
        scores = np.concatenate([s_pos, s_neg])
        yb = np.concatenate([np.ones(s_pos.size, bool), np.zeros(s_neg.size, bool)])
        thr, bacc = best_threshold_bacc(scores, yb)
        auc = roc_auc(yb, scores)
        pred = scores > thr
        cm += np.array([[np.sum(pred & yb), np.sum(~pred & yb)],
                        [np.sum(pred & ~yb), np.sum(~pred & ~yb)]])
        fold_rows.append({"fold": f, "train": train_src, "test_pristine": test_src, "bacc": bacc,
                          "auc": auc, "threshold": thr, "n_test_pristine": int(s_pos.size),
                          "n_test_synthetic": int(s_neg.size)})
        all_y.append(yb)
        all_s.append(scores)
    return EvalReport("open-set", str(family), str(method), classifier,
                      float(np.mean([r["bacc"] for r in fold_rows])),
                      float(np.mean([r["auc"] for r in fold_rows])),
                      labels, cm.tolist(), fold_rows,
                      roc_points(np.concatenate(all_y), np.concatenate(all_s)),
                      time.perf_counter() - t0, seed)


def one_vs_rest(X, y, *, classifier: str = "if", family: str = "", method: str = "", seed: int = 0,
                threshold: Optional[float] = None, return_scores: bool = False):
    """
    Two-fold attribution with one one-class model per source: every test
    sample goes to the source whose model scores it highest (``unknown``
    below ``threshold``).  AUC is the micro average over the score table.
    Features pass through :func:`~blotforensics.features.model_input` first.
    """
    t0 = time.perf_counter()
    X, y = _check_xy(X, y)
    X = model_input(X, family, classifier)
    classes = sorted(set(y.tolist()), key=str)
    if len(classes) < 3:
        raise ContractError("one-vs-rest attribution needs at least three sources")
    rng = np.random.default_rng(seed)
    parts = _stratified_parts(y, 2, rng)
    labels = [str(c) for c in classes] + ([UNKNOWN] if threshold is not None else [])
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    fold_rows = []
    all_y, all_s = [], []
    score_tables = []
    for f in range(2):
        train, test = parts[1 - f], parts[f]
        models = {}
        for j, c in enumerate(classes):
            rows = train[y[train] == c]
            models[c] = fit_one_class(classifier, X[rows], seed=seed + 1000 * f + 10 * j)
        S = score_matrix(models, X[test])
        best = np.argmax(S, axis=1)
        pred = np.asarray(classes, dtype=object)[best]
        if threshold is not None:
            pred = np.where(S[np.arange(S.shape[0]), best] < threshold, UNKNOWN, pred)
        bacc = balanced_accuracy(y[test], pred)
        auc = auc_micro(y[test], S, classes)
        cm += confusion_matrix(y[test], pred, labels)
        fold_rows.append({"fold": f, "bacc": bacc, "auc": auc, "n_train": int(train.size),
                          "n_test": int(test.size)})
        all_y.append(y[test])
        all_s.append(S)
        score_tables.append((test, S))
    yt = np.concatenate(all_y)
    sc = np.vstack(all_s)
    onehot = np.column_stack([yt == c for c in classes]).ravel()
    report = EvalReport("one-vs-rest", str(family), str(method), classifier,
                        float(np.mean([r["bacc"] for r in fold_rows])),
                        float(np.mean([r["auc"] for r in fold_rows])),
                        labels, cm.tolist(), fold_rows, roc_points(onehot, sc.ravel()),
                        time.perf_counter() - t0, seed)
    if return_scores:
        return report, score_tables
    return report


def noise_grid(table, families: Sequence[str], methods: Sequence[str], *, classifier: str = "if",
               seed: int = 0) -> List[EvalReport]:
    """
    One-vs-rest attribution for every (family, method) cell of a
    :class:`~blotforensics.features.FeatureTable`.  A failing cell is recorded
    with NaN metrics and the grid continues.
    """
    if not families or not methods:
        raise ContractError("noise grid needs nonempty family and method lists")
    reports = []
    for family in families:
        for method in methods:
            cell_seed = stable_seed(seed, family, method)
            try:
                rep = one_vs_rest(table.get(family, method), table.labels, classifier=classifier,
                                  family=str(family), method=str(method), seed=cell_seed)
            except Exception as exc:  # noqa: BLE001 - a broken cell must not stop the grid
                log.warning("grid cell %s/%s failed: %s", family, method, exc)
                rep = EvalReport("one-vs-rest", str(family), str(method), classifier, float("nan"),
                                 float("nan"), [], [], seed=cell_seed, error=f"{type(exc).__name__}: {exc}")
            reports.append(rep)
    return reports


def write_grid_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_COLUMNS)
        for r in reports:
            writer.writerow([r.family, r.method, r.classifier, "mean", repr(r.bacc), repr(r.auc),
                             f"{r.seconds:.3f}"])


def read_grid_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["bacc"] = float(row["bacc"])
        row["auc"] = float(row["auc"])
        row["seconds"] = float(row["seconds"])
    return rows
