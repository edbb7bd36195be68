"""Spherical Yat-kernel attention linearized with Gauss-Laguerre quadrature and random features."""

from .errors import ConfigError, NumericError, SlayError, TensorFormatError
from .features import PRESETS, FeatureMatrix, SlayFeatureConfig, draw_randomness, slay_features
from .kernels import KernelParams, exact_attention, spherical_yat_derivative, spherical_yat_scalar, yat_kernel
from .linear import AttentionOutput, causal_linear_attention, linear_attention
from .mechanisms import MECHANISMS, BaselineConfig, feature_maps, run_mechanism
from .quadrature import QuadratureRule, gauss_laguerre, rule_for, scale_rule
from .tensor import NormalizedSequence, RngStream, normalize_rows, normalize_sequence

__version__ = "0.1.0"

__all__ = [
    "AttentionOutput", "BaselineConfig", "ConfigError", "FeatureMatrix", "KernelParams", "MECHANISMS",
    "NormalizedSequence", "NumericError", "PRESETS", "QuadratureRule", "RngStream", "SlayError",
    "SlayFeatureConfig", "TensorFormatError", "causal_linear_attention", "draw_randomness", "exact_attention",
    "feature_maps", "gauss_laguerre", "linear_attention", "normalize_rows", "normalize_sequence", "rule_for",
    "run_mechanism", "scale_rule", "slay_features", "spherical_yat_derivative", "spherical_yat_scalar",
    "yat_kernel",
]
