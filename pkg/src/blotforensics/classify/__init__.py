"""
Classifiers: random forest (closed set), isolation forest and PPCA
(one-class), and max-score attribution over per-source one-class models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..core import ContractError
from .forest import RandomForestModel, rf_fit, rf_predict_proba
from .iforest import IsolationForestModel, average_path_length, if_fit, if_score
from .ppca import PPCAModel, ppca_fit, ppca_loglik

MODEL_FORMAT = "blot-forensics-model/1"
UNKNOWN = "unknown"

ONE_CLASS_KINDS = ("if", "ppca")

__all__ = [
    "AttributionResult", "IsolationForestModel", "MODEL_FORMAT", "PPCAModel", "RandomForestModel",
    "UNKNOWN", "attribute", "average_path_length", "fit_one_class", "if_fit", "if_score",
    "load_model", "model_from_dict", "model_to_dict", "ppca_fit", "ppca_loglik", "rf_fit",
    "rf_predict_proba", "save_model", "score_matrix",
]


def fit_one_class(kind: str, X, seed: int = 0):
    """Fit an ``"if"`` or ``"ppca"`` one-class model with default settings."""
    if kind == "if":
        return if_fit(X, seed=seed)
    if kind == "ppca":
        return ppca_fit(X)
    raise ContractError(f"unknown one-class classifier {kind!r}; expected 'if' or 'ppca'")


def one_class_score(model, X) -> np.ndarray:
    """Score where higher means more typical of the model's training source."""
    return model.score_samples(X)


def score_matrix(models: Mapping[str, object], X) -> np.ndarray:
    """``(n_samples, n_models)`` scores in the mapping's key order."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.column_stack([one_class_score(m, X) for m in models.values()])


@dataclass
class AttributionResult:
    scores: Dict[str, float]
    label: str
    best: str
    threshold: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def is_unknown(self) -> bool:
        return self.label == UNKNOWN

    def to_dict(self) -> dict:
        out = {"label": self.label, "best_source": self.best, "threshold": self.threshold,
               "scores": {k: float(v) for k, v in self.scores.items()}}
        out.update(self.extra)
        return out


def attribute(models: Mapping[str, object], x=None, t: Optional[float] = None) -> AttributionResult:
    """
    Attribute ``x`` to the source whose model scores it highest; report
    ``unknown`` when a threshold ``t`` is given and the best score is below it.

    ``models`` maps labels either to one-class models or directly to
    precomputed scores.
    """
    if not models:
        raise ContractError("attribution needs at least one source model")
    scores = {}
    for label, model in models.items():
        if isinstance(model, (int, float, np.floating, np.integer)):
            scores[label] = float(model)
        else:
            scores[label] = float(one_class_score(model, x)[0])
    best = max(scores, key=lambda k: scores[k])
    label = best
    if t is not None and scores[best] < t:
        label = UNKNOWN
    return AttributionResult(scores, label, best, t)


# --------------------------------------------------------------------------
# persistence

_KINDS = {
    "random-forest": RandomForestModel,
    "isolation-forest": IsolationForestModel,
    "ppca": PPCAModel,
}


def model_to_dict(model) -> dict:
    data = model.to_dict()
    data["format"] = MODEL_FORMAT
    return data


def model_from_dict(data: dict):
    if data.get("format") != MODEL_FORMAT:
        raise ContractError(f"unsupported model format {data.get('format')!r}; expected {MODEL_FORMAT}")
    kind = data.get("kind")
    if kind not in _KINDS:
        raise ContractError(f"unknown model kind {kind!r}")
    return _KINDS[kind].from_dict(data)


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
