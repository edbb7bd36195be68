"""Random and deterministic feature maps that assemble the SLAY map Psi.

Per quadrature node r the map is ``sqrt(w_r) * fuse(phi_poly(u), phi_PRF(u; s_r))``;
nodes are concatenated in order. All randomness is drawn once by
:func:`draw_randomness` and shared between the query and key calls.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .kernels import DEFAULT_EPSILON, KernelParams
from .linear import DEFAULT_DELTA
from .quadrature import MAX_NODES, QuadratureRule, rule_for
from .tensor import RngStream, sample_gaussian, sample_sphere

POLY_KINDS = ("exact", "anchor", "nystrom", "random-maclaurin", "tensorsketch", "none")
FUSIONS = ("kronecker", "sketch", "hadamard", "none")
EXACT_POLY_CAP = 4096
UNIT_TOL = 1e-4
ILL_CONDITIONED = 1e-10


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class SlayFeatureConfig:
    """Every approximation knob of the SLAY estimator.

    JSON uses these field names, except ``lam`` which is spelled ``lambda``.
    """

    epsilon: float = DEFAULT_EPSILON
    delta: float = DEFAULT_DELTA
    r: int = 3
    d_prf: int = 16
    poly_kind: str = "anchor"
    p_anchors: int = 8
    d_p: int = 64
    lam: float = 1e-6
    fusion: str = "kronecker"
    d_t: int = 256
    seed: int = 0
    share_omega: bool = False

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ConfigError("epsilon must be > 0")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        for name in ("r", "d_prf", "p_anchors", "d_p", "d_t"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {val!r}")
        if self.r > MAX_NODES:
            raise ConfigError(f"r must be <= {MAX_NODES}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.poly_kind not in POLY_KINDS:
            raise ConfigError(f"poly_kind must be one of {POLY_KINDS}, got {self.poly_kind!r}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if (self.poly_kind == "none") != (self.fusion == "none"):
            raise ConfigError("poly_kind='none' (Laplace-only) requires fusion='none' and vice versa")
        if self.poly_kind == "tensorsketch" and not _pow2(self.d_p):
            raise ConfigError("tensorsketch needs d_p to be a power of two")
        if self.fusion == "sketch" and not _pow2(self.d_t):
            raise ConfigError("sketch fusion needs d_t to be a power of two")
        if self.fusion == "hadamard" and self.poly_kind in ("anchor", "nystrom", "random-maclaurin", "tensorsketch"):
            if self.poly_dim(None) != self.d_prf:
                raise ConfigError(
                    f"hadamard fusion needs poly feature dim == d_prf ({self.poly_dim(None)} != {self.d_prf})"
                )
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must fit in 64 bits")

    def poly_dim(self, d: int | None) -> int:
        if self.poly_kind == "exact":
            if d is None:
                raise ConfigError("exact poly dimension depends on d")
            return d * d
        if self.poly_kind in ("anchor", "nystrom"):
            return self.p_anchors
        if self.poly_kind in ("random-maclaurin", "tensorsketch"):
            return self.d_p
        return 1  # Laplace-only: the PRF block stands alone

    def node_dim(self, d: int) -> int:
        if self.fusion == "none":
            return self.d_prf
        if self.fusion == "kronecker":
            return self.poly_dim(d) * self.d_prf
        if self.fusion == "sketch":
            return self.d_t
        return min(self.poly_dim(d), self.d_prf)

    def feature_dim(self, d: int) -> int:
        return self.r * self.node_dim(d)

    @property
    def kernel_params(self) -> KernelParams:
        return KernelParams(self.epsilon)

    @property
    def guarantees_nonneg(self) -> bool:
        if self.poly_kind == "none":
            return True
        if self.fusion == "kronecker":
            return self.poly_kind in ("exact", "anchor")
        # elementwise products need non-negative poly entries; vec(uu^T) has signed ones
        return self.fusion == "hadamard" and self.poly_kind == "anchor"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SlayFeatureConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        types = {"epsilon": float, "delta": float, "lam": float}
        for k, typ in types.items():
            if k in data:
                if isinstance(data[k], bool) or not isinstance(data[k], (int, float)):
                    raise ConfigError(f"{k} must be a number")
                data[k] = typ(data[k])
        if "share_omega" in data and not isinstance(data["share_omega"], bool):
            raise ConfigError("share_omega must be a boolean")
        for k in ("poly_kind", "fusion"):
            if k in data and not isinstance(data[k], str):
                raise ConfigError(f"{k} must be a string")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "SlayFeatureConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    @classmethod
    def load(cls, path) -> "SlayFeatureConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

    def with_(self, **changes) -> "SlayFeatureConfig":
        return replace(self, **changes)


def _pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


PRESETS = {
    "paper-default": SlayFeatureConfig(r=3, d_prf=16, p_anchors=8, epsilon=1e-3),
    "fidelity": SlayFeatureConfig(r=8, d_prf=256, p_anchors=32, epsilon=1e-3),
}


# --- individual feature maps -----------------------------------------------------


def _check_unit_rows(u: np.ndarray) -> None:
    n = np.linalg.norm(u, axis=1)
    off = np.abs(n - 1.0) > UNIT_TOL
    if np.any(off):
        i = int(np.argmax(off))
        raise NumericError(f"row {i} has norm {n[i]:.6g}; positive random features need unit-norm rows")


def prf_features(u_hat: np.ndarray, s: float, omega: np.ndarray) -> np.ndarray:
    """(1/sqrt(D)) exp(sqrt(2s) omega_i.u - s): strictly positive, unbiased for exp(2s q.k) on the sphere."""
    if s < 0:
        raise NumericError("node value s must be >= 0")
    _check_unit_rows(u_hat)
    D = omega.shape[0]
    proj = u_hat @ omega.T
    return np.exp(np.sqrt(2.0 * s) * proj - s) / np.sqrt(D)


def poly_exact(u: np.ndarray, cap: int = EXACT_POLY_CAP) -> np.ndarray:
    """vec(u u^T); inner products equal (q.k)^2 exactly."""
    L, d = u.shape
    if d * d > cap:
        raise ConfigError(f"exact polynomial features need d^2 = {d * d} > cap {cap}")
    return (u[:, :, None] * u[:, None, :]).reshape(L, d * d)


def poly_anchor(u: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """(1/sqrt(P)) [(x.a_i)^2]_i; entries and induced inner products are non-negative."""
    return (u @ anchors.T) ** 2 / np.sqrt(anchors.shape[0])


def poly_random_maclaurin(u: np.ndarray, rad_r: np.ndarray, rad_s: np.ndarray) -> np.ndarray:
    """(1/sqrt(D_p)) (r_i.x)(s_i.x) with Rademacher r_i, s_i; unbiased for (x.y)^2 but signed."""
    return (u @ rad_r.T) * (u @ rad_s.T) / np.sqrt(rad_r.shape[0])


@dataclass(frozen=True)
class CountSketch:
    """Hash ``h: [n] -> [width]`` with signs ``sigma: [n] -> {-1, +1}``."""

    index: np.ndarray
    sign: np.ndarray
    width: int

    @classmethod
    def draw(cls, rng: RngStream, n: int, width: int) -> "CountSketch":
        g = rng.generator()
        index = g.integers(0, width, size=n)
        sign = g.integers(0, 2, size=n) * 2.0 - 1.0
        return cls(index, sign, width)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.index.size, self.width))
        m[np.arange(self.index.size), self.index] = self.sign
        return m

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.index.size:
            raise NumericError(f"count sketch built for {self.index.size} inputs, got {x.shape[1]}")
        return x @ self.matrix()


def tensor_sketch_pair(a: np.ndarray, b: np.ndarray, h1: CountSketch, h2: CountSketch) -> np.ndarray:
    """Sketch of the row-wise outer products a_i (x) b_i: circular convolution of two count sketches."""
    width = h1.width
    fa = np.fft.rfft(h1.apply(a), n=width, axis=1)
    fb = np.fft.rfft(h2.apply(b), n=width, axis=1)
    return np.fft.irfft(fa * fb, n=width, axis=1)


def poly_tensorsketch(u: np.ndarray, h1: CountSketch, h2: CountSketch) -> np.ndarray:
    """Degree-2 TensorSketch of u; inner products are unbiased for (x.y)^2 but may be negative."""
    if not _pow2(h1.width) or h1.width != h2.width:
        raise ConfigError("tensorsketch needs two hashes of the same power-of-two width")
    return tensor_sketch_pair(u, u, h1, h2)


def nystrom_whitener(anchors: np.ndarray, lam: float) -> np.ndarray:
    """(K_AA + lam I)^{-1/2} for the squared-dot-product kernel on the anchors."""
    from .tensor import symmetric_eigh

    k_aa = (anchors @ anchors.T) ** 2
    w, vecs = symmetric_eigh(k_aa)
    if w[0] < ILL_CONDITIONED:
        if w[0] + lam <= ILL_CONDITIONED:
            raise NumericError(
                f"anchor Gram is ill-conditioned (min eigenvalue {w[0]:.3e}) and ridge {lam:g} does not fix it"
            )
        warnings.warn(f"anchor Gram min eigenvalue {w[0]:.3e}; relying on ridge {lam:g}", RuntimeWarning)
    return (vecs / np.sqrt(w + lam)) @ vecs.T


def poly_nystrom(u: np.ndarray, anchors: np.ndarray, lam: float = 0.0, whitener: np.ndarray | None = None) -> np.ndarray:
    """K_{xA} (K_AA + lam I)^{-1/2}; exact on the anchors when lam = 0, sign not guaranteed."""
    if whitener is None:
        whitener = nystrom_whitener(anchors, lam)
    return ((u @ anchors.T) ** 2) @ whitener


def fuse_node(
    phi_poly: np.ndarray,
    phi_prf: np.ndarray,
    weight: float,
    fusion: str = "kronecker",
    sketch: tuple[CountSketch, CountSketch] | None = None,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Combine polynomial and PRF features for one quadrature node, scaled by sqrt(weight).

    kronecker: row-wise outer product, poly index major. sketch: TensorSketch of
    that outer product to ``sketch[0].width`` columns. hadamard: elementwise product.
    ``out`` (optional) receives the result, e.g. a column slice of a larger matrix.
    """
    if not weight > 0:
        raise NumericError("quadrature weight must be positive")
    L = phi_poly.shape[0]
    scaled_prf = np.sqrt(weight) * phi_prf
    if fusion == "kronecker":
        width = phi_poly.shape[1] * phi_prf.shape[1]
        if out is None:
            out = np.empty((L, width), dtype=np.result_type(phi_poly, phi_prf))
        grid = out.reshape(L, phi_poly.shape[1], phi_prf.shape[1])
        if not np.shares_memory(grid, out):
            raise NumericError("kronecker output buffer cannot be viewed as (L, poly, prf)")
        np.multiply(phi_poly[:, :, None], scaled_prf[:, None, :], out=grid)
        return out
    if fusion == "sketch":
        if sketch is None:
            raise ConfigError("sketch fusion needs a pair of count sketches")
        res = tensor_sketch_pair(phi_poly, scaled_prf, *sketch)
    elif fusion == "hadamard":
        if phi_poly.shape[1] != phi_prf.shape[1]:
            raise ConfigError(f"hadamard fusion needs equal widths ({phi_poly.shape[1]} vs {phi_prf.shape[1]})")
        res = phi_poly * scaled_prf
    else:
        raise ConfigError(f"unknown fusion {fusion!r}")
    if out is None:
        return res
    out[...] = res
    return out


# --- shared randomness and the full map ------------------------------------------


@dataclass(frozen=True)
class SlayRandomness:
    """Every random draw the SLAY map needs, for inputs of dimension ``d``."""

    d: int
    omegas: tuple[np.ndarray, ...]
    anchors: np.ndarray | None = None
    whitener: np.ndarray | None = None
    rm: tuple[np.ndarray, np.ndarray] | None = None
    poly_sketch: tuple[CountSketch, CountSketch] | None = None
    fusion_sketches: tuple[tuple[CountSketch, CountSketch], ...] = field(default_factory=tuple)


def draw_randomness(cfg: SlayFeatureConfig, d: int) -> SlayRandomness:
    """Draw omegas, anchors, Rademacher vectors and hashes from independent named streams of ``cfg.seed``."""
    seed = int(cfg.seed)
    if cfg.share_omega:
        shared = sample_gaussian(RngStream.named(seed, "omega"), cfg.d_prf, d)
        omegas = tuple(shared for _ in range(cfg.r))
    else:
        omegas = tuple(sample_gaussian(RngStream.named(seed, f"omega/{r}"), cfg.d_prf, d) for r in range(cfg.r))
    anchors = whitener = rm = poly_sketch = None
    if cfg.poly_kind in ("anchor", "nystrom"):
        anchors = sample_sphere(RngStream.named(seed, "anchors"), cfg.p_anchors, d)
        if cfg.poly_kind == "nystrom":
            whitener = nystrom_whitener(anchors, cfg.lam)
    elif cfg.poly_kind == "random-maclaurin":
        g = RngStream.named(seed, "maclaurin").generator()
        rm = (g.integers(0, 2, size=(cfg.d_p, d)) * 2.0 - 1.0, g.integers(0, 2, size=(cfg.d_p, d)) * 2.0 - 1.0)
    elif cfg.poly_kind == "tensorsketch":
        poly_sketch = (
            CountSketch.draw(RngStream.named(seed, "poly-sketch/0"), d, cfg.d_p),
            CountSketch.draw(RngStream.named(seed, "poly-sketch/1"), d, cfg.d_p),
        )
    fusion_sketches: tuple = ()
    if cfg.fusion == "sketch":
        pd = cfg.poly_dim(d)
        fusion_sketches = tuple(
            (
                CountSketch.draw(RngStream.named(seed, f"fusion-sketch/{r}/poly"), pd, cfg.d_t),
                CountSketch.draw(RngStream.named(seed, f"fusion-sketch/{r}/prf"), cfg.d_prf, cfg.d_t),
            )
            for r in range(cfg.r)
        )
    return SlayRandomness(d, omegas, anchors, whitener, rm, poly_sketch, fusion_sketches)


@dataclass(frozen=True)
class FeatureMatrix:
    psi: np.ndarray
    node_spans: tuple[tuple[int, int], ...]
    guaranteed_nonneg_scores: bool
    poly_kind: str
    fusion: str

    @property
    def m(self) -> int:
        return self.psi.shape[1]


def poly_features(u_hat: np.ndarray, cfg: SlayFeatureConfig, rnd: SlayRandomness) -> np.ndarray | None:
    kind = cfg.poly_kind
    if kind == "exact":
        return poly_exact(u_hat)
    if kind == "anchor":
        return poly_anchor(u_hat, rnd.anchors)
    if kind == "nystrom":
        return poly_nystrom(u_hat, rnd.anchors, cfg.lam, rnd.whitener)
    if kind == "random-maclaurin":
        return poly_random_maclaurin(u_hat, *rnd.rm)
    if kind == "tensorsketch":
        return poly_tensorsketch(u_hat, *rnd.poly_sketch)
    return None


def slay_features(
    u_hat: np.ndarray,
    cfg: SlayFeatureConfig,
    rule: QuadratureRule | None = None,
    randomness: SlayRandomness | None = None,
) -> FeatureMatrix:
    """Psi(u) for unit-norm rows ``u_hat``: per-node fused features, concatenated in node order.

    Pass the same ``randomness`` for queries and keys; drawing it here is only
    a convenience for single calls.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    d = u_hat.shape[1]
    if rule is None:
        rule = rule_for(cfg.r, cfg.kernel_params)
    if rule.r != cfg.r:
        raise ConfigError(f"rule has {rule.r} nodes but config asks for {cfg.r}")
    if randomness is None:
        randomness = draw_randomness(cfg, d)
    if randomness.d != d:
        raise ConfigError(f"randomness drawn for d={randomness.d}, input has d={d}")
    phi_poly = poly_features(u_hat, cfg, randomness)
    width = cfg.node_dim(d)
    psi = np.empty((u_hat.shape[0], cfg.r * width))
    spans = tuple((r * width, (r + 1) * width) for r in range(cfg.r))
    for r, (a, b) in enumerate(spans):
        phi_prf = prf_features(u_hat, float(rule.s[r]), randomness.omegas[r])
        if phi_poly is None:
            np.multiply(np.sqrt(rule.w[r]), phi_prf, out=psi[:, a:b])
        else:
            sketch = randomness.fusion_sketches[r] if cfg.fusion == "sketch" else None
            fuse_node(phi_poly, phi_prf, float(rule.w[r]), cfg.fusion, sketch, out=psi[:, a:b])
    return FeatureMatrix(psi, spans, cfg.guarantees_nonneg, cfg.poly_kind, cfg.fusion)
