"""
Residual-noise extractors.

Every extractor maps a gray image to a residual of the same shape.  All
convolutions use mirror (half-sample symmetric) boundary handling, the same
convention as ``scipy.ndimage`` mode ``"reflect"``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .core import ContractError


class NoiseMethod(str, Enum):
    MANDELLI_T = "mandelli-t"
    BAMMEY_C = "bammey-c"
    GAUSSIAN = "gaussian"
    MEAN = "mean"
    KIRCHNER_K = "kirchner-k"
    PMAP = "pmap"
    NLMEANS = "nlmeans"
    NONE = "none"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value) -> "NoiseMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ContractError(f"unknown noise method {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class Kernel:
    name: str
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ContractError("kernel weights must be a 2-D matrix")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())


# four-neighbour predictor
KERNEL_T = Kernel("T", np.array([[0, 1, 0],
                                 [1, 0, 1],
                                 [0, 1, 0]]) / 4.0)
# zero-sum cross (high-pass by itself)
KERNEL_C = Kernel("C", np.array([[1, -1],
                                 [-1, 1]], dtype=np.float64))
# eight-neighbour mean predictor
KERNEL_M = Kernel("M", np.array([[1, 1, 1],
                                 [1, 0, 1],
                                 [1, 1, 1]]) / 8.0)
# fixed linear predictor for resampling detection
KERNEL_K = Kernel("K", np.array([[-0.25, 0.50, -0.25],
                                 [0.50, 0.00, 0.50],
                                 [-0.25, 0.50, -0.25]]))


def gaussian_kernel(sigma: float = 1.0, radius: int = 4) -> Kernel:
    """Discrete Gaussian truncated at ``radius`` and normalized to sum 1."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = np.outer(g, g)
    return Kernel(f"G(sigma={sigma},r={radius})", k / k.sum())


KERNEL_GAUSSIAN = gaussian_kernel(1.0, 4)


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ContractError(f"expected a nonempty 2-D image, got shape {img.shape}")
    return img


def conv2d(img: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Same-size 2-D convolution with mirror boundary."""
    return ndimage.convolve(img, kernel.weights, mode="reflect")


def predictor_residual(img, kernel: Kernel) -> np.ndarray:
    """
    Residual ``img - conv2d(img, kernel)`` for a predictor kernel.

    :param img: gray image
    :param kernel: weights summing to 1
    :return: residual with the shape of ``img``
    """
    img = _check_image(img)
    if abs(kernel.total - 1.0) > 1e-9:
        raise ContractError(f"predictor kernel {kernel.name} must sum to 1, sums to {kernel.total:.12g}")
    return img - conv2d(img, kernel)


def highpass_residual(img, kernel: Kernel) -> np.ndarray:
    """Residual ``conv2d(img, kernel)`` for a zero-sum (high-pass) kernel."""
    img = _check_image(img)
    if abs(kernel.total) > 1e-9:
        raise ContractError(f"high-pass kernel {kernel.name} must sum to 0, sums to {kernel.total:.12g}")
    return conv2d(img, kernel)


# --------------------------------------------------------------------------
# EM probability map

def _neighbour_offsets(radius: int):
    return [(dr, dc) for dr in range(-radius, radius + 1) for dc in range(-radius, radius + 1)
            if (dr, dc) != (0, 0)]


def pmap_residual(img, neighborhood_radius: int = 1, max_iters: int = 50, tol: float = 1e-6,
                  sigma0: float = 0.0075, return_weights: bool = False):
    """
    Probability map of linear dependence on neighbours, estimated by EM.

    Each pixel is modelled as either a linear combination of its neighbours
    plus Gaussian noise, or an outlier drawn uniformly over the image's
    dynamic range.  The E-step gives the per-pixel posterior of the first
    model; the M-step refits the combination weights by weighted least
    squares and re-estimates the noise deviation.

    :param img: gray image
    :param neighborhood_radius: 1 (8 neighbours) or 2 (24 neighbours)
    :param max_iters: maximum EM sweeps
    :param tol: stop when the weight vector moves less than this (L2)
    :param sigma0: initial noise deviation as a fraction of the dynamic range
    :param return_weights: also return the final weight vector
    :return: probability map in [0, 1], same shape as ``img``
    """
    img = _check_image(img)
    if neighborhood_radius not in (1, 2):
        raise ContractError("neighborhood_radius must be 1 or 2")
    if max_iters < 1:
        raise ContractError("max_iters must be >= 1")

    offsets = _neighbour_offsets(neighborhood_radius)
    n_nb = len(offsets)
    alpha = np.full(n_nb, 1.0 / n_nb)
    dyn = float(img.max() - img.min())
    if dyn == 0.0:
        out = np.ones_like(img)
        return (out, alpha) if return_weights else out

    r = neighborhood_radius
    pad = np.pad(img, r, mode="symmetric")
    h, w = img.shape
    y = img.ravel()
    Y = np.empty((y.size, n_nb))
    for k, (dr, dc) in enumerate(offsets):
        Y[:, k] = pad[r + dr:r + dr + h, r + dc:r + dc + w].ravel()

    p0 = 1.0 / dyn
    sigma = sigma0 * dyn
    sigma_floor = 1e-6 * dyn
    prob = np.ones_like(y)
    for _ in range(max_iters):
        resid = y - Y @ alpha
        cond = np.exp(-0.5 * (resid / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
        prob = cond / (cond + p0)

        Yw = Y * prob[:, None]
        A = Y.T @ Yw
        b = Yw.T @ y
        try:
            if np.linalg.cond(A) > 1e12:
                raise np.linalg.LinAlgError("ill-conditioned normal equations")
            new_alpha = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            warnings.warn("P-map weighted least squares is singular; using ridge-regularized solve",
                          RuntimeWarning, stacklevel=2)
            new_alpha = np.linalg.solve(A + 1e-6 * np.eye(n_nb), b)

        resid = y - Y @ new_alpha
        wsum = prob.sum()
        if wsum > 0:
            sigma = max(float(np.sqrt((prob * resid ** 2).sum() / wsum)), sigma_floor)
        moved = float(np.linalg.norm(new_alpha - alpha))
        alpha = new_alpha
        if moved < tol:
            break

    resid = y - Y @ alpha
    cond = np.exp(-0.5 * (resid / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
    prob = (cond / (cond + p0)).reshape(h, w)
    return (prob, alpha) if return_weights else prob


# --------------------------------------------------------------------------
# non-local means

def nlmeans_denoise(img, strength: float = 0.1, patch: int = 7, window: int = 21,
                    sigma: float = 0.0) -> np.ndarray:
    """
    Non-local means estimate of ``img``.

    Every pixel is replaced by a weighted average of the pixels in its
    ``window`` x ``window`` search region, with weights
    ``exp(-max(d2 - 2 sigma^2, 0) / strength^2)`` where ``d2`` is the mean
    squared difference between the two ``patch`` x ``patch`` neighbourhoods.
    """
    img = _check_image(img)
    if patch < 3 or patch % 2 == 0:
        raise ContractError("patch must be odd and >= 3")
    if window % 2 == 0 or window <= patch:
        raise ContractError("window must be odd and larger than patch")
    if strength <= 0:
        raise ContractError("strength must be > 0")

    pr, wr = patch // 2, window // 2
    h, w = img.shape
    pad = np.pad(img, pr + wr, mode="symmetric")
    core = pad[wr:wr + h + 2 * pr, wr:wr + w + 2 * pr]
    inv_h2 = 1.0 / strength ** 2
    bias = 2.0 * sigma ** 2
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dr in range(-wr, wr + 1):
        for dc in range(-wr, wr + 1):
            shifted = pad[wr + dr:wr + dr + h + 2 * pr, wr + dc:wr + dc + w + 2 * pr]
            d2 = ndimage.uniform_filter((core - shifted) ** 2, size=patch, mode="constant")
            d2 = d2[pr:pr + h, pr:pr + w]
            wgt = np.exp(-np.maximum(d2 - bias, 0.0) * inv_h2)
            num += wgt * shifted[pr:pr + h, pr:pr + w]
            den += wgt
    return num / den


def nlmeans_residual(img, strength: float = 0.1, patch: int = 7, window: int = 21,
                     sigma: float = 0.0) -> np.ndarray:
    img = _check_image(img)
    return img - nlmeans_denoise(img, strength, patch, window, sigma)


# --------------------------------------------------------------------------

def extract(img, method, *, cross_mode: str = "direct", nlmeans_strength: float = 0.1,
            nlmeans_patch: int = 7, nlmeans_window: int = 21, pmap_radius: int = 1,
            pmap_iters: int = 50, pmap_tol: float = 1e-6) -> np.ndarray:
    """
    Residual of ``img`` under the named noise method.

    ``cross_mode`` selects how the zero-sum cross kernel is applied:
    ``"direct"`` filters with it, ``"subtract"`` returns image minus filtered.
    """
    img = _check_image(img)
    method = NoiseMethod.parse(method)
    if method is NoiseMethod.MANDELLI_T:
        return predictor_residual(img, KERNEL_T)
    if method is NoiseMethod.BAMMEY_C:
        if cross_mode == "direct":
            return highpass_residual(img, KERNEL_C)
        if cross_mode == "subtract":
            return img - conv2d(img, KERNEL_C)
        raise ContractError(f"cross_mode must be 'direct' or 'subtract', got {cross_mode!r}")
    if method is NoiseMethod.GAUSSIAN:
        return predictor_residual(img, KERNEL_GAUSSIAN)
    if method is NoiseMethod.MEAN:
        return predictor_residual(img, KERNEL_M)
    if method is NoiseMethod.KIRCHNER_K:
        return predictor_residual(img, KERNEL_K)
    if method is NoiseMethod.PMAP:
        return pmap_residual(img, pmap_radius, pmap_iters, pmap_tol)
    if method is NoiseMethod.NLMEANS:
        return nlmeans_residual(img, nlmeans_strength, nlmeans_patch, nlmeans_window)
    return img - img.mean()
