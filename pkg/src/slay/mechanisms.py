"""Name-addressable attention mechanisms: exact quadratic oracles and linear feature-map variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import cosformer_features, elu_plus_one_features, favor_plus_features
from .errors import ConfigError
from .features import SlayFeatureConfig, draw_randomness, slay_features
from .kernels import exact_attention, kernel_normalized_attention, kernel_scores, softmax_attention
from .linear import AttentionOutput, causal_linear_attention, explicit_gram_attention, linear_attention
from .quadrature import rule_for
from .tensor import RngStream, as_matrix, normalize_rows, normalize_sequence, sample_gaussian

QUADRATIC = ("softmax", "yat", "spherical-yat")
LINEAR = ("slay", "favor", "elu1", "cosformer")
MECHANISMS = QUADRATIC + LINEAR
LABELS = {"cosformer": "cosformer-style"}


@dataclass(frozen=True)
class BaselineConfig:
    """Knobs for the comparator maps; SLAY itself is configured by :class:`SlayFeatureConfig`."""

    favor_features: int = 64
    favor_normalize: bool = False
    cosformer_max_len: int | None = None  # None: sequence length


@dataclass(frozen=True)
class FeaturePair:
    psi_q: np.ndarray
    psi_k: np.ndarray
    nonneg_scores: bool


def check_mechanism(name: str) -> None:
    if name not in MECHANISMS:
        raise ConfigError(f"unknown mechanism {name!r}; choose from {', '.join(MECHANISMS)}")


def feature_maps(
    name: str,
    q: np.ndarray,
    k: np.ndarray,
    cfg: SlayFeatureConfig = SlayFeatureConfig(),
    base: BaselineConfig = BaselineConfig(),
) -> FeaturePair:
    """Query and key features for a linear mechanism, built from one shared random draw."""
    check_mechanism(name)
    if name not in LINEAR:
        raise ConfigError(f"{name!r} is a quadratic mechanism with no feature map")
    if name == "slay":
        q_hat, _ = normalize_rows(q)
        k_hat, _ = normalize_rows(k)
        rule = rule_for(cfg.r, cfg.kernel_params)
        rnd = draw_randomness(cfg, q.shape[1])
        fq = slay_features(q_hat, cfg, rule, rnd)
        fk = slay_features(k_hat, cfg, rule, rnd)
        return FeaturePair(fq.psi, fk.psi, fq.guaranteed_nonneg_scores)
    if name == "favor":
        omega = sample_gaussian(RngStream.named(cfg.seed, "favor"), base.favor_features, q.shape[1])
        return FeaturePair(
            favor_plus_features(q, omega, base.favor_normalize),
            favor_plus_features(k, omega, base.favor_normalize),
            True,
        )
    if name == "elu1":
        return FeaturePair(elu_plus_one_features(q), elu_plus_one_features(k), True)
    L = max(q.shape[0], k.shape[0])
    max_len = base.cosformer_max_len or L
    return FeaturePair(
        cosformer_features(q, np.arange(q.shape[0]), max_len),
        cosformer_features(k, np.arange(k.shape[0]), max_len),
        True,
    )


def run_mechanism(
    name: str,
    q,
    k,
    v,
    cfg: SlayFeatureConfig = SlayFeatureConfig(),
    causal: bool = False,
    mode: str = "serial",
    base: BaselineConfig = BaselineConfig(),
    explicit: bool = False,
    dtype=np.float64,
) -> AttentionOutput:
    """Attention output of mechanism ``name`` on raw ``q``, ``k``, ``v``.

    ``explicit=True`` evaluates linear mechanisms through the materialized
    Gram matrix instead of the O(L) contraction. ``dtype=float32`` casts the
    features and values before the contraction.
    """
    check_mechanism(name)
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    v = as_matrix(v, "v")
    if name in QUADRATIC:
        q, k, v = (a.astype(dtype, copy=False) for a in (q, k, v))
        if name == "softmax":
            return softmax_attention(q, k, v, causal=causal)
        if name == "yat":
            scores = kernel_scores(q, k, "yat", cfg.kernel_params)
            return kernel_normalized_attention(scores, v, cfg.delta, causal)
        seq = normalize_sequence(q, k, v)
        return exact_attention(seq, "spherical-yat", cfg.kernel_params, cfg.delta, causal)
    pair = feature_maps(name, q, k, cfg, base)
    pq, pk, v = (a.astype(dtype, copy=False) for a in (pair.psi_q, pair.psi_k, v))
    if explicit:
        return explicit_gram_attention(pq, pk, v, cfg.delta, causal)
    if causal:
        return causal_linear_attention(pq, pk, v, cfg.delta, mode=mode)
    return linear_attention(pq, pk, v, cfg.delta)


def feature_dim(name: str, d: int, cfg: SlayFeatureConfig = SlayFeatureConfig(), base: BaselineConfig = BaselineConfig()) -> int:
    """Width m of the feature map; 0 for quadratic mechanisms."""
    check_mechanism(name)
    if name == "slay":
        return cfg.feature_dim(d)
    if name == "favor":
        return base.favor_features
    if name == "elu1":
        return d
    if name == "cosformer":
        return 2 * d
    return 0
