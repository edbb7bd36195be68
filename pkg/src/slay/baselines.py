"""Comparator feature maps for linear attention: ReLU random features, ELU+1, and a cosformer-style map."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import DEFAULT_FLOOR, normalize_rows


def favor_plus_features(u: np.ndarray, omega: np.ndarray, normalize: bool = False) -> np.ndarray:
    """(1/sqrt(m)) relu(omega u): ReLU random features (m = rows of ``omega``)."""
    m = omega.shape[0]
    if m < 1:
        raise ConfigError("favor needs at least one random feature")
    if normalize:
        u, _ = normalize_rows(u, DEFAULT_FLOOR)
    return np.maximum(u @ omega.T, 0.0) / np.sqrt(m)


def elu_plus_one_features(u: np.ndarray) -> np.ndarray:
    """elu(x) + 1 elementwise: x + 1 for x >= 0, exp(x) otherwise."""
    u = np.asarray(u)
    if not np.issubdtype(u.dtype, np.floating):
        u = u.astype(np.float64)
    return np.where(u >= 0, u + 1.0, np.exp(np.minimum(u, 0.0)))


def cosformer_features(u: np.ndarray, positions, max_len: int) -> np.ndarray:
    """[relu(u) cos(pi i / 2M), relu(u) sin(pi i / 2M)] so scores carry a cos(pi (i - j) / 2M) reweighting."""
    positions = np.asarray(positions)
    if positions.shape != (u.shape[0],):
        raise NumericError(f"need one position per row ({u.shape[0]}), got shape {positions.shape}")
    if positions.size and (np.any(positions < 0) or np.any(positions >= max_len)):
        raise NumericError(f"positions must lie in [0, {max_len})")
    if positions.size > 1 and np.any(np.diff(positions) <= 0):
        raise NumericError("positions must be strictly increasing")
    angle = (np.pi / (2.0 * max_len)) * positions.astype(np.float64)
    r = np.maximum(u, 0.0)
    return np.concatenate([r * np.cos(angle)[:, None], r * np.sin(angle)[:, None]], axis=1)
