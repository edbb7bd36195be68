"""Gauss-Laguerre rules and the discretized Laplace form of the spherical kernel.

With ``t = C s`` the integral ``int_0^inf e^{-Cs} h(s) ds`` becomes
``sum_r w_r h(s_r)`` where ``s_r = t_r / C`` and ``w_r = alpha_r / C``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, NumericError
from .kernels import KernelParams, X_SLACK

MAX_NODES = 64
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 100
DEFAULT_NODES = 3


def laguerre(n: int, t):
    """(L_n(t), L_{n-1}(t)) by the three-term recurrence."""
    t = np.asarray(t, dtype=np.float64)
    p_prev = np.zeros_like(t)
    p = np.ones_like(t)
    for j in range(n):
        p_prev, p = p, ((2 * j + 1 - t) * p - j * p_prev) / (j + 1)
    return p, p_prev


def _initial_guess(i: int, n: int, nodes: list[float]) -> float:
    # asymptotic starting points (Stroud & Secrest), alpha = 0
    if i == 0:
        return 3.0 / (1.0 + 2.4 * n)
    if i == 1:
        return nodes[0] + 15.0 / (1.0 + 2.5 * n)
    ai = i - 1
    return nodes[i - 1] + (1.0 + 2.55 * ai) / (1.9 * ai) * (nodes[i - 1] - nodes[i - 2])


@lru_cache(maxsize=None)
def _gauss_laguerre(r: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    nodes: list[float] = []
    for i in range(r):
        z = _initial_guess(i, r, nodes)
        for _ in range(NEWTON_MAX_ITER):
            p, p_prev = laguerre(r, z)
            dp = r * (p - p_prev) / z
            step = p / dp
            z -= step
            # residual scaled by the local slope: |L_r| <= tol * max(1, |t L_r'|)
            p, p_prev = laguerre(r, z)
            slope = abs(r * (p - p_prev))  # = |t L_r'(t)|
            if abs(p) <= NEWTON_TOL * max(1.0, slope) or abs(step) <= 4e-16 * max(1.0, z):
                break
        else:
            raise NumericError(f"Newton iteration for node {i} of the {r}-point rule did not converge")
        if nodes and z <= nodes[-1]:
            raise NumericError(f"node {i} of the {r}-point rule collapsed onto node {i - 1}")
        nodes.append(float(z))
    t = np.array(nodes)
    lr1, _ = laguerre(r + 1, t)
    alpha = t / ((r + 1) ** 2 * lr1 ** 2)
    return tuple(t), tuple(alpha)


def gauss_laguerre(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``r``-point rule for ``int_0^inf e^{-t} f(t) dt``."""
    if not (1 <= int(r) <= MAX_NODES):
        raise ConfigError(f"node count must be in [1, {MAX_NODES}], got {r}")
    t, alpha = _gauss_laguerre(int(r))
    return np.array(t), np.array(alpha)


@dataclass(frozen=True)
class QuadratureRule:
    r: int
    t: np.ndarray
    alpha: np.ndarray
    s: np.ndarray
    w: np.ndarray
    c: float

    @property
    def epsilon(self) -> float:
        return self.c - 2.0


def scale_rule(t, alpha, c: float) -> QuadratureRule:
    """Apply ``t = C s``: ``s_r = t_r / C``, ``w_r = alpha_r / C``."""
    t = np.asarray(t, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if isinstance(c, KernelParams):
        c = c.c
    if c < 2.0:
        raise ConfigError(f"C = 2 + eps must be >= 2, got {c}")
    if np.any(alpha <= 0) or np.any(np.diff(t) <= 0):
        raise ConfigError("raw rule must have positive weights and strictly increasing nodes")
    return QuadratureRule(len(t), t, alpha, t / c, alpha / c, float(c))


def rule_for(r: int = DEFAULT_NODES, params: KernelParams = KernelParams()) -> QuadratureRule:
    t, alpha = gauss_laguerre(r)
    return scale_rule(t, alpha, params.c)


def check_bernstein_domain(x, c: float) -> None:
    """C - 2x >= eps on the whole input: the Laplace form of 1/(C - 2x) applies."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + X_SLACK):
        raise NumericError("alignment outside [-1, 1]")
    eps = c - 2.0
    if np.any(c - 2.0 * np.clip(x, -1.0, 1.0) < eps - 1e-12):
        raise NumericError("C - 2x < eps: Laplace representation does not apply")


def quadrature_kernel_estimate(x, rule: QuadratureRule):
    """``sum_r w_r x^2 exp(2 s_r x)``: the quadrature discretization of the kernel."""
    check_bernstein_domain(x, rule.c)
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    terms = rule.w * np.exp(2.0 * np.multiply.outer(x, rule.s))
    out = x * x * terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def node_contributions(x, rule: QuadratureRule) -> np.ndarray:
    """Per-node terms ``w_r x^2 exp(2 s_r x)``; shape ``x.shape + (R,)``."""
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    return (x * x)[..., None] * rule.w * np.exp(2.0 * np.multiply.outer(x, rule.s))


def pure_laplace_rhs(x, rule: QuadratureRule):
    """``(C^2/4) sum_r w_r exp(2 s_r x) - C/4 - x/2`` (affine-corrected plain-exponential form)."""
    x = np.asarray(x, dtype=np.float64)
    c = rule.c
    mix = (rule.w * np.exp(2.0 * np.multiply.outer(x, rule.s))).sum(axis=-1)
    return c * c / 4.0 * mix - c / 4.0 - x / 2.0


def pure_laplace_identity_check(x, rule: QuadratureRule, min_nodes: int = 32):
    """|x^2/(C - 2x) - RHS| for the affine-corrected identity; needs a high-order rule."""
    if rule.r < min_nodes:
        raise ConfigError(f"identity check needs R >= {min_nodes}, got {rule.r}")
    check_bernstein_domain(x, rule.c)
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    lhs = x * x / (2.0 * (1.0 - x) + rule.epsilon)
    out = np.abs(lhs - pure_laplace_rhs(x, rule))
    return float(out) if out.ndim == 0 else out
