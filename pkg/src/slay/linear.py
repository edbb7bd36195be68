"""Kernel-normalized attention: the O(L) contraction and its explicit O(L^2) oracle.

All routines compute ``y_i = sum_j A_ij v_j / (sum_j A_ij + delta)``; the linear
forms take ``A = Psi(Q) Psi(K)^T`` implicitly and never build it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

DEFAULT_DELTA = 1e-6
DEFAULT_CHUNK = 128


@dataclass
class AttentionOutput:
    y: np.ndarray
    denominators: np.ndarray  # before delta
    degenerate_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))  # den <= 0

    @property
    def ok(self) -> bool:
        return self.degenerate_rows.size == 0

    def diagnostic(self) -> str:
        if self.ok:
            return "no degenerate rows"
        rows = ", ".join(str(i) for i in self.degenerate_rows[:8])
        more = "" if self.degenerate_rows.size <= 8 else f" (+{self.degenerate_rows.size - 8} more)"
        return f"{self.degenerate_rows.size} degenerate row(s): {rows}{more}"


def finalize(num: np.ndarray, den: np.ndarray, delta: float) -> AttentionOutput:
    """Divide numerators by ``den + delta``.

    Rows with ``den <= 0`` (before delta) are flagged as degenerate; those
    with ``den + delta <= 0`` are also zeroed since the division is undefined.
    """
    total = den + delta
    undefined = ~(total > 0)
    safe = np.where(undefined, 1.0, total)
    y = num / safe[:, None]
    if np.any(undefined):
        y[undefined] = 0.0
    return AttentionOutput(y, den, np.flatnonzero(~(den > 0)))


def _check_shapes(psi_q, psi_k, v):
    if psi_q.ndim != 2 or psi_k.ndim != 2 or v.ndim != 2:
        raise NumericError("feature and value matrices must be 2-D")
    if psi_q.shape[1] != psi_k.shape[1]:
        raise NumericError(f"feature dims differ: {psi_q.shape[1]} vs {psi_k.shape[1]}")
    if psi_k.shape[0] != v.shape[0]:
        raise NumericError(f"{psi_k.shape[0]} key rows but {v.shape[0]} value rows")


def linear_attention(psi_q: np.ndarray, psi_k: np.ndarray, v: np.ndarray, delta: float = DEFAULT_DELTA) -> AttentionOutput:
    """Non-causal attention via ``Psi(Q) (Psi(K)^T V)``; auxiliary memory is O(m d_V)."""
    _check_shapes(psi_q, psi_k, v)
    kv = psi_k.T @ v
    z = psi_k.sum(axis=0)
    return finalize(psi_q @ kv, psi_q @ z, delta)


def causal_linear_attention(
    psi_q: np.ndarray,
    psi_k: np.ndarray,
    v: np.ndarray,
    delta: float = DEFAULT_DELTA,
    mode: str = "serial",
    chunk: int = DEFAULT_CHUNK,
) -> AttentionOutput:
    """Causal attention with running state ``S_i = sum_{j<=i} psi(k_j) v_j^T`` and ``z_i = sum_{j<=i} psi(k_j)``.

    ``mode="serial"`` accumulates strictly left to right, one token at a time,
    so row i depends bitwise only on rows <= i. ``mode="chunked"`` processes
    blocks of ``chunk`` tokens: a masked ``chunk x chunk`` product inside the
    block plus the carried state from earlier blocks.
    """
    _check_shapes(psi_q, psi_k, v)
    if psi_q.shape[0] != psi_k.shape[0]:
        raise NumericError("causal attention needs equal query and key lengths")
    L, m = psi_q.shape
    dtype = np.result_type(psi_q, psi_k, v)
    num = np.empty((L, v.shape[1]), dtype=dtype)
    den = np.empty(L, dtype=dtype)
    state = np.zeros((m, v.shape[1]), dtype=dtype)
    z = np.zeros(m, dtype=dtype)
    if mode == "serial":
        for i in range(L):
            state += np.outer(psi_k[i], v[i])
            z += psi_k[i]
            num[i] = psi_q[i] @ state
            den[i] = psi_q[i] @ z
    elif mode == "chunked":
        if chunk < 1:
            raise NumericError("chunk must be >= 1")
        mask = np.tril(np.ones((chunk, chunk), dtype=dtype))
        for start in range(0, L, chunk):
            stop = min(start + chunk, L)
            qc, kc, vc = psi_q[start:stop], psi_k[start:stop], v[start:stop]
            a = qc @ kc.T
            a *= mask[: stop - start, : stop - start]
            num[start:stop] = qc @ state + a @ vc
            den[start:stop] = qc @ z + a.sum(axis=1)
            state += kc.T @ vc
            z += kc.sum(axis=0)
    else:
        raise NumericError(f"unknown causal mode {mode!r}")
    return finalize(num, den, delta)


def kernel_normalized_attention(scores: np.ndarray, v: np.ndarray, delta: float, causal: bool = False) -> AttentionOutput:
    """Row-normalize an explicit score matrix against ``v``.

    ``scores`` is modified in place when ``causal`` (entries above the
    diagonal are zeroed) so large matrices are not copied.
    """
    if causal:
        L = scores.shape[0]
        for start in range(0, L, 1024):
            stop = min(start + 1024, L)
            rows = np.arange(start, stop)[:, None]
            block = scores[start:stop]
            block[np.arange(scores.shape[1])[None, :] > rows] = 0.0
    den = scores.sum(axis=1)
    return finalize(scores @ v, den, delta)


def explicit_gram_attention(psi_q, psi_k, v, delta: float = DEFAULT_DELTA, causal: bool = False) -> AttentionOutput:
    """Quadratic reference: materialize ``Psi(Q) Psi(K)^T`` and normalize."""
    _check_shapes(psi_q, psi_k, v)
    return kernel_normalized_attention(psi_q @ psi_k.T, v, delta, causal)
