"""Fidelity metrics, denominator statistics, kernel curves and the polynomial-approximation ablation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .features import SlayFeatureConfig, draw_randomness, slay_features
from .kernels import KernelParams, exact_attention, spherical_yat_scalar
from .linear import linear_attention
from .quadrature import quadrature_kernel_estimate, rule_for
from .tensor import RngStream, normalize_sequence, sample_gaussian, sample_sphere

CONVERGENCE_GRID = 201


# --- fidelity ---------------------------------------------------------------------


@dataclass(frozen=True)
class FidelityReport:
    rel_l2: float
    cosine: float
    mse: float
    latency_ms: float | None = None
    mechanism: str = ""
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"mechanism": self.mechanism, "rel_l2": self.rel_l2, "cosine": self.cosine,
                "mse": self.mse, "latency_ms": self.latency_ms}


def fidelity(y_approx, y_exact, latency_ms: float | None = None, mechanism: str = "", config: dict | None = None) -> FidelityReport:
    """Relative Frobenius error, flattened cosine and MSE of ``y_approx`` against ``y_exact`` (computed in f64)."""
    a = np.asarray(y_approx, dtype=np.float64)
    b = np.asarray(y_exact, dtype=np.float64)
    if a.shape != b.shape:
        raise NumericError(f"shape mismatch: {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise NumericError("reference output is identically zero")
    na = np.linalg.norm(a)
    cos = float(np.dot(a.ravel(), b.ravel()) / (na * nb)) if na > 0 else 0.0
    return FidelityReport(
        rel_l2=float(np.linalg.norm(a - b) / nb),
        cosine=float(np.clip(cos, -1.0, 1.0)),
        mse=float(np.mean((a - b) ** 2)),
        latency_ms=latency_ms,
        mechanism=mechanism,
        config=dict(config or {}),
    )


def time_call(fn, repeats: int = 20, warmup: int = 5) -> tuple[float, float]:
    """Median and interquartile range of ``fn()`` wall time in milliseconds."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return float(med), float(q3 - q1)


# --- denominator positivity -------------------------------------------------------


@dataclass(frozen=True)
class DenominatorStats:
    """Statistics of single-key attention denominators ``<Psi(q), Psi(k)>`` over random unit pairs."""

    min_value: float
    fraction_negative: float
    bin_edges: np.ndarray
    counts: np.ndarray
    n_samples: int
    guaranteed_nonneg: bool

    def row(self) -> dict:
        return {"min_value": self.min_value, "fraction_negative": self.fraction_negative,
                "n_samples": self.n_samples, "guaranteed_nonneg": self.guaranteed_nonneg}


def pairwise_scores(cfg: SlayFeatureConfig, n_pairs: int, seed: int, dim: int) -> np.ndarray:
    """``n_pairs`` approximate kernel scores between random unit queries and keys.

    Draws ``n = ceil(sqrt(n_pairs))`` queries and keys and keeps the first
    ``n_pairs`` entries of the ``n x n`` score matrix.
    """
    n = int(np.ceil(np.sqrt(n_pairs)))
    run = cfg.with_(seed=seed)
    q = sample_sphere(RngStream.named(seed, "sweep/q"), n, dim)
    k = sample_sphere(RngStream.named(seed, "sweep/k"), n, dim)
    rule = rule_for(run.r, run.kernel_params)
    rnd = draw_randomness(run, dim)
    psi_q = slay_features(q, run, rule, rnd).psi
    psi_k = slay_features(k, run, rule, rnd).psi
    return (psi_q @ psi_k.T).ravel()[:n_pairs]


def denominator_sweep(cfg: SlayFeatureConfig, n_pairs: int = 100_000, seeds=range(8), dim: int = 8, bins: int = 50) -> DenominatorStats:
    if n_pairs < 1:
        raise ConfigError("n_pairs must be >= 1")
    values = np.concatenate([pairwise_scores(cfg, n_pairs, int(s), dim) for s in seeds])
    counts, edges = np.histogram(values, bins=bins)
    return DenominatorStats(
        min_value=float(values.min()),
        fraction_negative=float(np.mean(values < 0)),
        bin_edges=edges,
        counts=counts,
        n_samples=int(values.size),
        guaranteed_nonneg=cfg.guarantees_nonneg,
    )


# --- kernel response and quadrature convergence -----------------------------------


def kernel_curve(p: KernelParams, grid, r: int = 3) -> list[dict]:
    """Rows of x, exact spherical kernel, R-node quadrature estimate and exp(x)."""
    x = np.asarray(grid, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise NumericError("kernel curve grid must lie in [-1, 1]")
    exact = spherical_yat_scalar(x, p)
    quad = quadrature_kernel_estimate(x, rule_for(r, p))
    return [
        {"x": float(xi), "spherical_yat": float(e), "quadrature": float(qv), "softmax": float(np.exp(xi))}
        for xi, e, qv in zip(np.atleast_1d(x), np.atleast_1d(exact), np.atleast_1d(quad))
    ]


def quadrature_error(p: KernelParams, r: int, n_grid: int = CONVERGENCE_GRID) -> float:
    x = np.linspace(-1.0, 1.0, n_grid)
    return float(np.max(np.abs(quadrature_kernel_estimate(x, rule_for(r, p)) - spherical_yat_scalar(x, p))))


def quadrature_convergence_sweep(p: KernelParams, r_values) -> list[dict]:
    r_values = list(r_values)
    if not r_values:
        raise ConfigError("need at least one node count")
    return [{"r": int(r), "max_abs_error": quadrature_error(p, int(r))} for r in r_values]


# --- polynomial-approximation ablation --------------------------------------------


@dataclass(frozen=True)
class AblationScale:
    name: str
    length: int
    r: int
    m: int  # PRF features per node
    p: int  # anchors, also the matched polynomial budget


SCALES = {
    "small": AblationScale("small", 128, 2, 8, 8),
    "medium": AblationScale("medium", 256, 2, 16, 16),
    "large": AblationScale("large", 512, 2, 32, 32),
    "paper-default": AblationScale("paper-default", 256, 3, 16, 8),
}
VARIANTS = ("exact", "laplace-only", "anchor", "hadamard", "nystrom", "tensorsketch", "random-maclaurin")


def variant_config(variant: str, scale: AblationScale, seed: int, epsilon: float = 1e-3) -> SlayFeatureConfig | None:
    """Feature config for one ablation row at matched budget; ``None`` for the exact reference."""
    base = SlayFeatureConfig(epsilon=epsilon, r=scale.r, d_prf=scale.m, p_anchors=scale.p, d_p=scale.p, seed=seed)
    if variant == "exact":
        return None
    if variant == "anchor":
        return base
    if variant == "nystrom":
        return base.with_(poly_kind="nystrom")
    if variant == "tensorsketch":
        return base.with_(poly_kind="tensorsketch")
    if variant == "random-maclaurin":
        return base.with_(poly_kind="random-maclaurin")
    if variant == "laplace-only":
        # PRF-only, widened to the same total feature count as the Kronecker variants
        return base.with_(poly_kind="none", fusion="none", d_prf=scale.p * scale.m)
    if variant == "hadamard":
        return base.with_(fusion="hadamard", d_prf=scale.p, share_omega=True)
    raise ConfigError(f"unknown ablation variant {variant!r}")


@dataclass(frozen=True)
class ProjectionLayer:
    """A single attention layer's tied Q/K/V/output projections, shared by every variant."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    heads: int

    @classmethod
    def draw(cls, seed: int, d_model: int = 128, heads: int = 4) -> "ProjectionLayer":
        if d_model % heads:
            raise ConfigError("d_model must be divisible by heads")
        g = RngStream.named(seed, "ablation/projections").generator()
        bound = 1.0 / np.sqrt(d_model)  # uniform fan-in initialization, as for a default dense layer
        w = [g.uniform(-bound, bound, (d_model, d_model)) for _ in range(4)]
        b = [g.uniform(-bound, bound, d_model) for _ in range(4)]
        return cls(*w, *b, heads=heads)

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]

    def project(self, x: np.ndarray):
        return x @ self.wq + self.bq, x @ self.wk + self.bk, x @ self.wv + self.bv

    def split(self, a: np.ndarray) -> list[np.ndarray]:
        return np.split(a, self.heads, axis=1)

    def output(self, heads_out: list[np.ndarray]) -> np.ndarray:
        return np.concatenate(heads_out, axis=1) @ self.wo + self.bo


def ablation_tokens(seed: int, length: int, d_model: int) -> np.ndarray:
    return sample_gaussian(RngStream.named(seed, "ablation/tokens"), length, d_model)


def _exact_heads(q, k, v, layer: ProjectionLayer, epsilon: float, delta: float):
    p = KernelParams(epsilon)
    return [exact_attention(normalize_sequence(qh, kh, vh), "spherical-yat", p, delta).y
            for qh, kh, vh in zip(layer.split(q), layer.split(k), layer.split(v))]


def _slay_heads(q, k, v, layer: ProjectionLayer, cfg: SlayFeatureConfig):
    rule = rule_for(cfg.r, cfg.kernel_params)
    d_head = layer.d_model // layer.heads
    rnd = draw_randomness(cfg, d_head)

    def forward():
        outs = []
        for qh, kh, vh in zip(layer.split(q), layer.split(k), layer.split(v)):
            seq = normalize_sequence(qh, kh, vh)
            fq = slay_features(seq.q_hat, cfg, rule, rnd).psi
            fk = slay_features(seq.k_hat, cfg, rule, rnd).psi
            outs.append(linear_attention(fq, fk, seq.v, cfg.delta).y)
        return outs

    return forward


def poly_ablation(
    scale: AblationScale,
    seeds=range(5),
    variants=VARIANTS,
    d_model: int = 128,
    heads: int = 4,
    epsilon: float = 1e-3,
    timing: bool = True,
    repeats: int = 20,
    warmup: int = 5,
) -> list[dict]:
    """Per-seed fidelity of each polynomial variant against exact spherical attention.

    Each seed draws one token sequence and one projection layer used by all
    variants. Metrics are reported on the projected layer output (``output``)
    and on the concatenated per-head attention outputs before the output
    projection (``heads``).
    """
    rows = []
    for seed in seeds:
        layer = ProjectionLayer.draw(seed, d_model, heads)
        x = ablation_tokens(seed, scale.length, d_model)
        q, k, v = layer.project(x)
        exact_h = _exact_heads(q, k, v, layer, epsilon, 1e-6)
        exact_cat = np.concatenate(exact_h, axis=1)
        exact_out = layer.output(exact_h)
        for variant in variants:
            cfg = variant_config(variant, scale, seed, epsilon)
            if cfg is None:
                heads_out, latency = exact_h, None
                if timing:
                    latency, _ = time_call(lambda: _exact_heads(q, k, v, layer, epsilon, 1e-6), repeats, warmup)
            else:
                forward = _slay_heads(q, k, v, layer, cfg)
                heads_out = forward()
                latency = time_call(forward, repeats, warmup)[0] if timing else None
            out = fidelity(layer.output(heads_out), exact_out, latency, variant)
            raw = fidelity(np.concatenate(heads_out, axis=1), exact_cat)
            rows.append({
                "scale": scale.name, "variant": variant, "seed": int(seed), "T": scale.length,
                "R": scale.r, "M": scale.m, "P": scale.p,
                "rel_l2": out.rel_l2, "cosine": out.cosine, "mse": out.mse,
                "heads_rel_l2": raw.rel_l2, "heads_cosine": raw.cosine,
                "latency_ms": latency,
            })
    return rows


def summarize_ablation(rows: list[dict]) -> list[dict]:
    """Mean over seeds of each metric per (scale, variant), in first-seen order."""
    keys = []
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["scale"], row["variant"])
        if key not in groups:
            keys.append(key)
            groups[key] = []
        groups[key].append(row)
    out = []
    for key in keys:
        g = groups[key]
        first = g[0]
        summary = {k: first[k] for k in ("scale", "variant", "T", "R", "M", "P")}
        summary["seeds"] = len(g)
        for metric in ("rel_l2", "cosine", "mse", "heads_rel_l2", "heads_cosine", "latency_ms"):
            vals = [r[metric] for r in g if r[metric] is not None]
            summary[metric] = float(np.mean(vals)) if vals else None
        out.append(summary)
    return out


def scale_config(scale: AblationScale) -> dict:
    return asdict(scale)
