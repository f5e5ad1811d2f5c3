"""Probabilistic PCA (closed-form maximum likelihood) as a one-class density model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ContractError

NOISE_FLOOR = 1e-9


@dataclass
class PPCAModel:
    mean: np.ndarray
    components: np.ndarray   # U_k, orthonormal columns (dim x k)
    eigenvalues: np.ndarray  # retained sample-covariance eigenvalues (k,)
    noise_variance: float

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def W(self) -> np.ndarray:
        """Loading matrix ``U_k (L_k - sigma^2 I)^(1/2)``."""
        return self.components * np.sqrt(np.maximum(self.eigenvalues - self.noise_variance, 0.0))

    def covariance(self) -> np.ndarray:
        W = self.W
        return W @ W.T + self.noise_variance * np.eye(self.dim)

    def loglik(self, X) -> np.ndarray:
        """
        Gaussian log-density under ``C = W W^T + sigma^2 I``.  Uses the
        eigenstructure of C: eigenvalues ``max(l_i, sigma^2)`` on the retained
        axes and ``sigma^2`` on the complement.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ContractError(f"expected {self.dim} features, got {X.shape[1]}")
        s2 = self.noise_variance
        lam = np.maximum(self.eigenvalues, s2)
        D = X - self.mean
        proj = D @ self.components
        resid_sq = (D ** 2).sum(axis=1) - (proj ** 2).sum(axis=1)
        resid_sq = np.maximum(resid_sq, 0.0)
        maha = (proj ** 2 / lam).sum(axis=1) + resid_sq / s2
        logdet = np.log(lam).sum() + (self.dim - self.k) * np.log(s2)
        return -0.5 * (self.dim * np.log(2.0 * np.pi) + logdet + maha)

    def score_samples(self, X) -> np.ndarray:
        return self.loglik(X)

    def to_dict(self) -> dict:
        return {"kind": "ppca", "mean": self.mean.tolist(), "components": self.components.tolist(),
                "eigenvalues": self.eigenvalues.tolist(), "noise_variance": self.noise_variance}

    @classmethod
    def from_dict(cls, data: dict) -> "PPCAModel":
        comps = np.asarray(data["components"], dtype=np.float64)
        mean = np.asarray(data["mean"], dtype=np.float64)
        comps = comps.reshape(mean.size, -1)
        return cls(mean, comps, np.asarray(data["eigenvalues"], dtype=np.float64),
                   float(data["noise_variance"]))


def ppca_fit(X, variance_frac: float = 0.95) -> PPCAModel:
    """
    Fit PPCA keeping the smallest number of axes whose eigenvalues explain at
    least ``variance_frac`` of the total sample variance; the noise variance
    is the mean of the discarded eigenvalues (floored at 1e-9).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ContractError("PPCA needs at least two samples")
    if not np.all(np.isfinite(X)):
        raise ContractError("features contain NaN or infinite values")
    n, d = X.shape
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]
    total = evals.sum()
    if not total > 0:
        raise ContractError("training features have zero variance; inspect the feature extraction")
    frac = np.cumsum(evals) / total
    k = int(np.searchsorted(frac, variance_frac - 1e-12) + 1)
    k = max(1, min(k, d))
    if k >= n:
        raise ContractError(f"PPCA retained {k} axes but only {n} samples are available")
    discarded = evals[k:]
    s2 = float(discarded.mean()) if discarded.size else 0.0
    s2 = max(s2, NOISE_FLOOR)
    return PPCAModel(mean, evecs[:, :k].copy(), evals[:k].copy(), s2)


def ppca_loglik(model: PPCAModel, x) -> np.ndarray:
    return model.loglik(x)
