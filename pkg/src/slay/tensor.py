"""Shared numerics: row normalization, seeded random streams, symmetric eigensolver.

Matrices are plain 2-D ``numpy.ndarray`` objects (float64 unless a caller opts
into float32).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

DEFAULT_FLOOR = 1e-12
UNIT_TOL = 1e-6


def as_matrix(m, name: str = "matrix", dtype=np.float64) -> np.ndarray:
    a = np.asarray(m, dtype=dtype)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise NumericError(f"{name}: expected a 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NumericError(f"{name}: non-finite entry at row {bad[0]}, col {bad[1]}")
    return a


def normalize_rows(m, floor: float = DEFAULT_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Divide each row by ``max(||row||, floor)``.

    Returns the normalized matrix and the clamped norms. Zero rows stay zero
    and report ``floor`` as their norm.
    """
    if floor <= 0:
        raise NumericError("floor must be positive")
    a = as_matrix(m, "normalize_rows input", dtype=np.result_type(np.asarray(m).dtype, np.float32))
    if a.shape[1] < 1:
        raise NumericError("normalize_rows needs at least one column")
    norms = np.maximum(np.linalg.norm(a, axis=1), floor)
    return a / norms[:, None], norms


@dataclass(frozen=True)
class NormalizedSequence:
    """Unit-norm query/key rows plus values; the input to every attention variant."""

    q_hat: np.ndarray
    k_hat: np.ndarray
    v: np.ndarray
    q_norms: np.ndarray
    k_norms: np.ndarray

    def __post_init__(self):
        lq, d = self.q_hat.shape
        lk, dk = self.k_hat.shape
        if d != dk:
            raise NumericError(f"query dim {d} != key dim {dk}")
        if d < 2:
            raise NumericError("spherical attention needs d_QK >= 2")
        if self.v.shape[0] != lk:
            raise NumericError(f"{self.v.shape[0]} value rows for {lk} keys")
        for name, rows in (("q_hat", self.q_hat), ("k_hat", self.k_hat)):
            n = np.linalg.norm(rows, axis=1)
            # clamped zero rows are the one allowed exception
            off = (np.abs(n - 1.0) > UNIT_TOL) & (n > 0)
            if np.any(off):
                raise NumericError(f"{name} row {int(np.argmax(off))} is not unit norm")

    @property
    def length(self) -> int:
        return self.q_hat.shape[0]

    @property
    def d_qk(self) -> int:
        return self.q_hat.shape[1]

    def raw_q(self) -> np.ndarray:
        return self.q_hat * self.q_norms[:, None]

    def raw_k(self) -> np.ndarray:
        return self.k_hat * self.k_norms[:, None]


def normalize_sequence(q, k, v, floor: float = DEFAULT_FLOOR) -> NormalizedSequence:
    q_hat, qn = normalize_rows(q, floor)
    k_hat, kn = normalize_rows(k, floor)
    v = as_matrix(v, "v", dtype=q_hat.dtype)
    return NormalizedSequence(q_hat, k_hat, v, qn, kn)


# --- randomness ---------------------------------------------------------------


def stream_id(name: str) -> int:
    """Stable integer id for a named stream (independent of PYTHONHASHSEED)."""
    return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream-id) pair naming an independent Philox stream.

    Every call to :meth:`generator` restarts the stream, so identical pairs
    always reproduce identical draws.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise NumericError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream) < 0:
            raise NumericError("stream id must be non-negative")

    @classmethod
    def named(cls, seed: int, name: str) -> "RngStream":
        return cls(int(seed), stream_id(name))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))


def sample_gaussian(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise NumericError("sample_gaussian needs rows, cols >= 1")
    return rng.generator().standard_normal((rows, cols))


def sample_sphere(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """Rows drawn uniformly on the unit sphere S^{cols-1}."""
    g = sample_gaussian(rng, rows, cols)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# --- symmetric eigensolver ----------------------------------------------------


def _check_symmetric(a: np.ndarray, tol: float) -> None:
    if a.shape[0] != a.shape[1]:
        raise NumericError(f"expected a square matrix, got {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > tol * max(1.0, np.max(np.abs(a))):
        raise NumericError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")


def _jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300 or abs(apq) <= 1e-18 * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # small-angle limit, avoids theta**2 overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def symmetric_eigh(a, method: str = "lapack", sym_tol: float = 1e-10):
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending.

    ``method="lapack"`` delegates to ``numpy.linalg.eigh``; ``method="jacobi"``
    runs a cyclic Jacobi sweep (fine up to a few hundred rows).
    """
    a = as_matrix(a, "symmetric_eigh input")
    _check_symmetric(a, sym_tol)
    a = 0.5 * (a + a.T)
    if method == "lapack":
        return np.linalg.eigh(a)
    if method == "jacobi":
        return _jacobi_eigh(a)
    raise NumericError(f"unknown eigensolver {method!r}")
