"""Yat and spherical-Yat kernels plus exact quadratic attention oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .linear import DEFAULT_DELTA, AttentionOutput, finalize, kernel_normalized_attention
from .tensor import NormalizedSequence, as_matrix, symmetric_eigh

DEFAULT_EPSILON = 1e-3
X_SLACK = 1e-9
KERNELS = ("softmax", "yat", "spherical-yat")
_BLOCK_ROWS = 512


@dataclass(frozen=True)
class KernelParams:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise NumericError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def c(self) -> float:
        return 2.0 + self.epsilon


def yat_kernel(q, k, p: KernelParams = KernelParams()) -> float:
    """(q.k)^2 / (||q - k||^2 + eps) for two vectors."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1:
        raise NumericError(f"dimension mismatch: {q.shape} vs {k.shape}")
    diff = q - k
    return float(np.dot(q, k) ** 2 / (np.dot(diff, diff) + p.epsilon))


def _alignment(x, clamp: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + X_SLACK):
        raise NumericError(f"alignment outside [-1, 1]: max |x| = {np.max(np.abs(x)):.17g}")
    return np.clip(x, -1.0, 1.0) if clamp else x


def chordal_denominator(x, epsilon: float):
    """C - 2x written as 2(1 - x) + eps; exact at x = 1."""
    return 2.0 * (1.0 - x) + epsilon


def spherical_yat_scalar(x, p: KernelParams = KernelParams()):
    """x^2 / (C - 2x), vectorized over ``x``; bounded above by exactly 1/eps."""
    x = _alignment(x)
    out = x * x / chordal_denominator(x, p.epsilon)
    return float(out) if out.ndim == 0 else out


def spherical_yat_derivative(x, p: KernelParams = KernelParams()):
    """d/dx of x^2 / (C - 2x) = 2x(C - x) / (C - 2x)^2."""
    x = _alignment(x)
    den = chordal_denominator(x, p.epsilon)
    out = 2.0 * x * ((1.0 - x) + 1.0 + p.epsilon) / (den * den)
    return float(out) if out.ndim == 0 else out


# --- dense score matrices -------------------------------------------------------


def _spherical_inplace(s: np.ndarray, eps: float) -> None:
    for start in range(0, s.shape[0], _BLOCK_ROWS):
        blk = s[start:start + _BLOCK_ROWS]
        np.clip(blk, -1.0, 1.0, out=blk)
        den = chordal_denominator(blk, eps)
        np.square(blk, out=blk)
        blk /= den


def _yat_inplace(s: np.ndarray, qn2: np.ndarray, kn2: np.ndarray, eps: float) -> None:
    for start in range(0, s.shape[0], _BLOCK_ROWS):
        blk = s[start:start + _BLOCK_ROWS]
        # ||q - k||^2 can round slightly negative for near-identical rows
        den = np.maximum(qn2[start:start + _BLOCK_ROWS, None] + kn2[None, :] - 2.0 * blk, 0.0) + eps
        np.square(blk, out=blk)
        blk /= den


def kernel_scores(q, k, kernel: str, p: KernelParams = KernelParams()) -> np.ndarray:
    """Explicit L_q x L_k matrix of Yat or spherical-Yat kernel values.

    ``spherical-yat`` expects unit rows; ``yat`` uses rows as given.
    Transformations run in row blocks so only one L x L buffer is live.
    """
    s = q @ k.T
    if kernel == "spherical-yat":
        _spherical_inplace(s, p.epsilon)
    elif kernel == "yat":
        _yat_inplace(s, np.einsum("ij,ij->i", q, q), np.einsum("ij,ij->i", k, k), p.epsilon)
    else:
        raise NumericError(f"kernel_scores does not handle {kernel!r}")
    return s


def softmax_attention(q, k, v, causal: bool = False, scale: float | None = None) -> AttentionOutput:
    """Standard row-softmax attention on raw scores ``scale * q k^T``."""
    s = q @ k.T
    s *= (1.0 / np.sqrt(q.shape[1])) if scale is None else scale
    L = s.shape[0]
    for start in range(0, L, _BLOCK_ROWS):
        blk = s[start:start + _BLOCK_ROWS]
        if causal:
            rows = np.arange(start, start + blk.shape[0])[:, None]
            blk[np.arange(s.shape[1])[None, :] > rows] = -np.inf
        blk -= blk.max(axis=1, keepdims=True)
        np.exp(blk, out=blk)
    den = s.sum(axis=1)
    return finalize(s @ v, den, 0.0)


def exact_attention(
    seq: NormalizedSequence,
    kernel: str = "spherical-yat",
    p: KernelParams = KernelParams(),
    delta: float = DEFAULT_DELTA,
    causal: bool = False,
    softmax_scaled: bool = True,
) -> AttentionOutput:
    """Quadratic reference attention over the normalized rows of ``seq``.

    Yat variants are kernel-normalized (``sum_j A_ij v_j / (sum_j A_ij + delta)``);
    softmax uses ``exp(q.k / sqrt(d))`` (or unscaled with ``softmax_scaled=False``).
    Rows whose denominator is non-positive come back zeroed and listed in
    ``degenerate_rows``.
    """
    if kernel == "softmax":
        scale = None if softmax_scaled else 1.0
        return softmax_attention(seq.q_hat, seq.k_hat, seq.v, causal=causal, scale=scale)
    if kernel not in KERNELS:
        raise NumericError(f"unknown kernel {kernel!r}")
    scores = kernel_scores(seq.q_hat, seq.k_hat, kernel, p)
    return kernel_normalized_attention(scores, seq.v, delta, causal)


def gram_matrix(points, p: KernelParams = KernelParams()) -> np.ndarray:
    pts = as_matrix(points, "points")
    g = spherical_yat_scalar(np.clip(pts @ pts.T, -1.0, 1.0), p)
    return 0.5 * (g + g.T)


def pd_spot_check(points, p: KernelParams = KernelParams(), method: str = "lapack") -> float:
    """Smallest eigenvalue of the spherical-Yat Gram matrix on unit-norm ``points``."""
    pts = as_matrix(points, "points")
    if pts.shape[1] < 2:
        raise NumericError("positive-definiteness check needs d >= 2")
    if pts.shape[0] > 200:
        raise NumericError("pd_spot_check is limited to 200 points")
    w, _ = symmetric_eigh(gram_matrix(pts, p), method=method)
    return float(w[0])
