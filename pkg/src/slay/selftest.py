"""Named invariant checks for every module, runnable from the CLI.

Each check returns ``(passed, detail)``. Checks flagged ``slow`` are skipped
under ``quick``.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis, baselines, features, kernels, linear, quadrature, tensor
from .errors import NumericError
from .features import SlayFeatureConfig
from .kernels import KernelParams
from .mechanisms import LINEAR, run_mechanism


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[[bool], tuple[bool, str]]
    slow: bool = False


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # pass | fail | skip | error
    detail: str
    seconds: float


REGISTRY: dict[str, Check] = {}


def check(name: str, slow: bool = False):
    def register(fn):
        REGISTRY[name] = Check(name, fn, slow)
        return fn
    return register


def _rng(name: str) -> np.random.Generator:
    return np.random.default_rng(zlib.crc32(name.encode()))


def unit_pair(x: float, d: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors in R^d with inner product ``x``."""
    q = np.zeros((1, d))
    k = np.zeros((1, d))
    q[0, 0] = 1.0
    k[0, 0] = x
    k[0, 1] = np.sqrt(max(1.0 - x * x, 0.0))
    return q, k


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    qm, r = np.linalg.qr(rng.standard_normal((d, d)))
    return qm * np.sign(np.diag(r))


# --- tensor-core --------------------------------------------------------------------


@check("tensor.normalize-idempotent")
def _normalize_idempotent(quick):
    m = _rng("idem").standard_normal((64, 8)) * 5
    once, _ = tensor.normalize_rows(m)
    twice, _ = tensor.normalize_rows(once)
    err = float(np.max(np.abs(once - twice)))
    return err <= 1e-12, f"max |N(N(m)) - N(m)| = {err:.2e}"


@check("tensor.stream-independence")
def _stream_independence(quick):
    a = tensor.sample_gaussian(tensor.RngStream(7, 1), 10_000, 1).ravel()
    b = tensor.sample_gaussian(tensor.RngStream(7, 2), 10_000, 1).ravel()
    c = float(np.corrcoef(a, b)[0, 1])
    return abs(c) < 0.05, f"sample correlation {c:+.4f}"


@check("tensor.eigh-trace")
def _eigh_trace(quick):
    worst = 0.0
    for method in ("lapack", "jacobi"):
        g = _rng("trace" + method).standard_normal((12, 12))
        a = g + g.T
        w, _ = tensor.symmetric_eigh(a, method=method)
        worst = max(worst, abs(w.sum() - np.trace(a)) / np.linalg.norm(a, 2))
    return worst <= 1e-8, f"|sum(lambda) - tr(A)| / ||A|| = {worst:.2e}"


# --- exact-kernels ------------------------------------------------------------------


@check("kernels.boundedness")
def _boundedness(quick):
    x = np.linspace(-1.0, 1.0, 10_001)
    msgs, ok = [], True
    for eps in (1e-3, 1e-1):
        f = kernels.spherical_yat_scalar(x, KernelParams(eps))
        top = np.flatnonzero(f == 1.0 / eps)
        ok &= bool(f.min() >= 0 and f.max() <= 1.0 / eps and top.tolist() == [x.size - 1])
        msgs.append(f"eps={eps:g}: max={f.max()!r}, argmax x={x[np.argmax(f)]:g}")
    return ok, "; ".join(msgs)


@check("kernels.rotation-invariance")
def _rotation(quick):
    rng = _rng("rot")
    worst = 0.0
    for _ in range(50):
        q, k = rng.standard_normal((2, 6))
        q, k = q / np.linalg.norm(q), k / np.linalg.norm(k)
        rot = random_orthogonal(rng, 6)
        worst = max(worst, abs(kernels.yat_kernel(rot @ q, rot @ k) - kernels.yat_kernel(q, k)))
    return worst <= 1e-9, f"max change under rotation {worst:.2e}"


@check("kernels.sign-non-invariance")
def _sign(quick):
    a, b = kernels.spherical_yat_scalar(0.5), kernels.spherical_yat_scalar(-0.5)
    return a != b, f"k(0.5)={a:.6g}, k(-0.5)={b:.6g}"


@check("kernels.derivative-bound")
def _derivative_bound(quick):
    eps = 1e-3
    x = np.linspace(-1.0, 1.0, 10_001)
    g = np.abs(kernels.spherical_yat_derivative(x, KernelParams(eps)))
    expected = 2.0 * (1.0 + eps) / eps**2
    ok = bool(np.isfinite(g).all() and np.argmax(g) == x.size - 1 and abs(g.max() - expected) <= 1e-9 * expected)
    return ok, f"max |f'| = {g.max():.9g} at x = {x[np.argmax(g)]:g}; expected {expected:.9g}"


@check("kernels.oracle-consistency")
def _oracle_consistency(quick):
    rng = _rng("oracle")
    seq = tensor.normalize_sequence(*(rng.standard_normal((16, 8)) for _ in range(3)))
    worst = 0.0
    for causal in (False, True):
        a = kernels.exact_attention(seq, "spherical-yat", causal=causal).y
        b = kernels.exact_attention(seq, "yat", causal=causal).y
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, f"max |spherical - yat| on unit rows = {worst:.2e}"


@check("kernels.chordal-identity")
def _chordal(quick):
    eps = 0.1
    x = np.linspace(-1.0, 1.0, 2001)
    diff = float(np.max(np.abs((2.0 + eps - 2.0 * x) - kernels.chordal_denominator(x, eps))))
    return diff <= 1e-15 * 8, f"max |(C - 2x) - (2(1 - x) + eps)| = {diff:.2e}"


# --- quadrature ---------------------------------------------------------------------


def moment_errors(r: int) -> list[float]:
    from math import factorial
    t, a = quadrature.gauss_laguerre(r)
    return [abs(float(np.sum(a * t**k)) - factorial(k)) / factorial(k) for k in range(2 * r + 1)]


@check("quadrature.moment-exactness")
def _moments(quick):
    ok, parts = True, []
    for r in (1, 2, 4, 8):
        errs = moment_errors(r)
        exact, first_miss = max(errs[: 2 * r]), errs[2 * r]
        ok &= exact <= 1e-9 and first_miss > 1e-6
        parts.append(f"R={r}: max exact err {exact:.1e}, k=2R err {first_miss:.1e}")
    return ok, "; ".join(parts)


@check("quadrature.bernstein-domain")
def _bernstein(quick):
    x = np.linspace(-1.0, 1.0, 2001)
    worst = 0.0
    for eps in (1e-3, 1e-1, 1.0):
        c = 2.0 + eps
        quadrature.check_bernstein_domain(x, c)
        worst = min(worst, float(np.min(c - 2.0 * x - eps)))
    try:
        quadrature.check_bernstein_domain(np.array([1.0 + 1e-6]), 2.1)
    except NumericError:
        return worst >= -1e-12, f"min (C - 2x - eps) = {worst:.1e}; out-of-range x rejected"
    return False, "x outside [-1, 1] was accepted"


@check("quadrature.exponential-convergence")
def _convergence(quick):
    p = KernelParams(0.1)
    errs = {r: analysis.quadrature_error(p, r) for r in (2, 4, 8, 16)}
    ratios = {r: errs[2 * r] / errs[r] for r in (2, 4, 8)}
    ok = all(v < 0.5 for v in ratios.values())
    return ok, ", ".join(f"E({2 * r})/E({r})={v:.3f}" for r, v in ratios.items())


@check("quadrature.weight-concentration")
def _concentration(quick):
    # holds in the small-R regime used by the estimator; from R = 7 on the largest weight sits at node 2
    bad = [r for r in range(2, 7) if not np.all(np.diff(quadrature.rule_for(r).w) < 0)]
    return not bad, "scaled weights strictly decreasing for R = 2..6" if not bad else f"not decreasing for R = {bad}"


@check("quadrature.positive-weights")
def _positive_weights(quick):
    worst = min(float(quadrature.rule_for(r).w.min()) for r in range(1, quadrature.MAX_NODES + 1))
    return worst > 0, f"smallest scaled weight over R = 1..64: {worst:.3e}"


# --- feature-maps -------------------------------------------------------------------


@check("features.prf-positivity")
def _prf_positive(quick):
    rng = _rng("prfpos")
    u, _ = tensor.normalize_rows(rng.standard_normal((256, 8)))
    omega = rng.standard_normal((64, 8))
    worst = min(float(features.prf_features(u, s, omega).min()) for s in (0.0, 0.1, 1.0, 5.0))
    return worst > 0, f"min PRF entry {worst:.3e}"


def node_score_samples(x: float, node: int, seeds: int, d_prf: int, r: int = 3) -> np.ndarray:
    q, k = unit_pair(x)
    out = np.empty(seeds)
    rule = quadrature.rule_for(r)
    for seed in range(seeds):
        cfg = SlayFeatureConfig(r=r, d_prf=d_prf, poly_kind="exact", seed=seed)
        rnd = features.draw_randomness(cfg, q.shape[1])
        fq = features.slay_features(q, cfg, rule, rnd)
        fk = features.slay_features(k, cfg, rule, rnd)
        a, b = fq.node_spans[node]
        out[seed] = float(fq.psi[0, a:b] @ fk.psi[0, a:b])
    return out


@check("features.unbiasedness-chain", slow=True)
def _unbiased_chain(quick):
    rule = quadrature.rule_for(3)
    seeds, d_prf = (16, 1024) if quick else (64, 4096)
    worst = 0.0
    for x in np.linspace(-1.0, 1.0, 9):
        for node in range(3):
            s = node_score_samples(float(x), node, seeds, d_prf)
            target = rule.w[node] * x * x * np.exp(2 * rule.s[node] * x)
            # x = -1 makes the PRF product deterministic; floor the SE at rounding level
            se = max(s.std(ddof=1) / np.sqrt(seeds), 1e-12 * abs(target), 1e-300)
            worst = max(worst, abs(s.mean() - target) / se)
    return worst <= 3.0, f"worst |mean - target| / SE = {worst:.2f}"


@check("features.positivity-guarantee")
def _positivity(quick):
    n = 10_000 if quick else 100_000
    parts, ok = [], True
    for kind in ("exact", "anchor"):
        scores = analysis.pairwise_scores(SlayFeatureConfig(poly_kind=kind), n, seed=0, dim=8)
        ok &= bool(scores.min() >= 0)
        parts.append(f"{kind}: min score {scores.min():.3e}")
    return ok, "; ".join(parts)


@check("features.signed-counterexample")
def _signed(quick):
    parts, ok = [], True
    for kind in ("tensorsketch", "random-maclaurin"):
        scores = analysis.pairwise_scores(SlayFeatureConfig(poly_kind=kind, d_p=8), 10_000, seed=0, dim=8)
        frac = float(np.mean(scores < 0))
        ok &= frac > 0
        parts.append(f"{kind}: {frac:.3f} negative")
    return ok, "; ".join(parts)


@check("features.shared-randomness-determinism")
def _determinism(quick):
    u, _ = tensor.normalize_rows(_rng("det").standard_normal((32, 8)))
    same = True
    for kind, fusion in (("anchor", "kronecker"), ("tensorsketch", "sketch"), ("nystrom", "kronecker"), ("none", "none")):
        cfg = SlayFeatureConfig(poly_kind=kind, fusion=fusion, seed=11)
        a = features.slay_features(u, cfg).psi
        b = features.slay_features(u, cfg).psi
        same &= a.tobytes() == b.tobytes()
    return same, "identical bytes across repeated builds" if same else "feature bytes differ"


def hadamard_kronecker_gap(seeds: int = 256, pairs: int = 64) -> tuple[float, float]:
    """Mean |E[hadamard - kronecker]| over a fixed pair set, and the mean standard error of that estimate."""
    rng = _rng("hadamard-pairs")
    q, _ = tensor.normalize_rows(rng.standard_normal((pairs, 8)))
    k, _ = tensor.normalize_rows(rng.standard_normal((pairs, 8)))
    diffs = np.empty((seeds, pairs))
    for seed in range(seeds):
        kron = SlayFeatureConfig(d_prf=8, p_anchors=8, share_omega=True, seed=seed)
        had = kron.with_(fusion="hadamard")
        rnd = features.draw_randomness(kron, 8)
        sk = np.einsum("ij,ij->i", features.slay_features(q, kron, randomness=rnd).psi,
                       features.slay_features(k, kron, randomness=rnd).psi)
        sh = np.einsum("ij,ij->i", features.slay_features(q, had, randomness=rnd).psi,
                       features.slay_features(k, had, randomness=rnd).psi)
        diffs[seed] = sh - sk
    gap = float(np.mean(np.abs(diffs.mean(axis=0))))
    noise = float(np.mean(diffs.std(axis=0, ddof=1) / np.sqrt(seeds)))
    return gap, noise


@check("features.hadamard-bias")
def _hadamard_bias(quick):
    gap, noise = hadamard_kronecker_gap()
    return gap > 10 * noise, f"mean |hadamard - kronecker| = {gap:.3e}, noise floor = {noise:.3e}"


# --- linear-attention ---------------------------------------------------------------


def _rel(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


SLAY_VARIANTS = {
    "slay-kronecker": SlayFeatureConfig(),
    "slay-sketch": SlayFeatureConfig(fusion="sketch", d_t=128),
    "slay-hadamard": SlayFeatureConfig(fusion="hadamard", d_prf=8),
    "slay-laplace-only": SlayFeatureConfig(poly_kind="none", fusion="none"),
}


def equivalence_errors(names, lengths=(1, 2, 32, 64)) -> dict[str, float]:
    """Worst relative gap between the O(L) path and the explicit Gram oracle per mechanism."""
    rng = _rng("equivalence")
    worst: dict[str, float] = {}
    for L in lengths:
        q, k, v = (rng.standard_normal((L, 8)) for _ in range(3))
        for label in names:
            mech, cfg = ("slay", SLAY_VARIANTS[label]) if label in SLAY_VARIANTS else (label, SlayFeatureConfig())
            for causal in (False, True):
                fast = run_mechanism(mech, q, k, v, cfg, causal=causal).y
                slow = run_mechanism(mech, q, k, v, cfg, causal=causal, explicit=True).y
                worst[label] = max(worst.get(label, 0.0), _rel(fast, slow))
    return worst


@check("linear.equivalence")
def _equivalence(quick):
    worst = equivalence_errors(list(SLAY_VARIANTS))
    return max(worst.values()) <= 1e-10, ", ".join(f"{k}: {v:.1e}" for k, v in worst.items())


@check("linear.causal-consistency")
def _causal_consistency(quick):
    rng = _rng("prefix")
    psi_q, psi_k = rng.random((48, 12)), rng.random((48, 12))
    v = rng.standard_normal((48, 3))
    full = linear.causal_linear_attention(psi_q, psi_k, v).y
    ok = all(np.array_equal(full[:p], linear.causal_linear_attention(psi_q[:p], psi_k[:p], v[:p]).y) for p in (1, 7, 31, 48))
    chunked = linear.causal_linear_attention(psi_q, psi_k, v, mode="chunked", chunk=8).y
    gap = float(np.max(np.abs(chunked - full)))
    return ok and gap <= 1e-8, f"prefix outputs bitwise equal: {ok}; chunked vs serial {gap:.1e}"


@check("linear.positivity-propagation")
def _positivity_propagation(quick):
    rng = _rng("propagate")
    q, k, v = (rng.standard_normal((128, 8)) for _ in range(3))
    worst, degenerate = np.inf, 0
    for kind in ("exact", "anchor"):
        for causal in (False, True):
            out = run_mechanism("slay", q, k, v, SlayFeatureConfig(poly_kind=kind), causal=causal)
            worst = min(worst, float(out.denominators.min()))
            degenerate += out.degenerate_rows.size
    return worst >= 0 and degenerate == 0, f"min denominator {worst:.3e}, degenerate rows {degenerate}"


@check("linear.linearity-in-v")
def _linearity(quick):
    rng = _rng("linearity")
    psi_q, psi_k = rng.random((40, 16)), rng.random((40, 16))
    v1, v2 = rng.standard_normal((2, 40, 4))
    a, b = 1.7, -0.4
    worst = 0.0
    for fn in (linear.linear_attention, linear.causal_linear_attention):
        lhs = fn(psi_q, psi_k, a * v1 + b * v2).y
        rhs = a * fn(psi_q, psi_k, v1).y + b * fn(psi_q, psi_k, v2).y
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


@check("linear.complexity-contract", slow=True)
def _complexity(quick):
    return scaling_check(lengths=(8192, 16384, 32768), reps=3)


def scaling_check(lengths=(8192, 16384, 32768), reps: int = 3) -> tuple[bool, str]:
    from .bench import doubling_ratios, run_bench

    lin = run_bench(["slay"], lengths, reps=reps, memory=False)
    quad = run_bench(["spherical-yat"], lengths, reps=max(1, reps - 1), memory=False)
    lr = doubling_ratios(lin, "slay", min_length=lengths[0])
    qr = doubling_ratios(quad, "spherical-yat", min_length=lengths[0])
    ok = bool(lr) and bool(qr) and all(r <= 2.5 for _, r in lr) and all(r >= 3.2 for _, r in qr)
    fmt = lambda rs: ", ".join(f"{L}->{2 * L}: {r:.2f}" for L, r in rs)
    return ok, f"slay {fmt(lr)}; spherical-yat {fmt(qr)}"


# --- baselines ----------------------------------------------------------------------


@check("baselines.equivalence")
def _baseline_equivalence(quick):
    worst = equivalence_errors(["favor", "elu1", "cosformer"])
    return max(worst.values()) <= 1e-10, ", ".join(f"{k}: {v:.1e}" for k, v in worst.items())


@check("baselines.nonneg-features")
def _baseline_nonneg(quick):
    rng = _rng("baseline-nonneg")
    q, k, v = (rng.standard_normal((64, 8)) for _ in range(3))
    omega = rng.standard_normal((32, 8))
    mins = {
        "favor": float(baselines.favor_plus_features(q, omega).min()),
        "elu1": float(baselines.elu_plus_one_features(q).min()),
    }
    elu = run_mechanism("elu1", q, k, v)
    ok = mins["favor"] >= 0 and mins["elu1"] > 0 and elu.ok
    fav = run_mechanism("favor", q, k, v)
    zero_rows = np.flatnonzero(~baselines.favor_plus_features(q, tensor.sample_gaussian(
        tensor.RngStream.named(0, "favor"), 64, 8)).any(axis=1))
    ok &= set(fav.degenerate_rows.tolist()) <= set(zero_rows.tolist())
    return ok, f"min features {mins}; favor degenerate rows limited to all-zero ReLU rows"


# --- analysis -----------------------------------------------------------------------


@check("analysis.fidelity-ordering")
def _ordering(quick):
    rows = analysis.summarize_ablation(analysis.poly_ablation(
        analysis.SCALES["paper-default"], seeds=range(5), timing=False,
        variants=("anchor", "nystrom", "tensorsketch", "hadamard")))
    e = {r["variant"]: r["rel_l2"] for r in rows}
    ok = e["anchor"] < e["nystrom"] < e["tensorsketch"] and e["anchor"] <= e["hadamard"]
    return ok, ", ".join(f"{k}: {v:.3g}" for k, v in e.items())


@check("analysis.denominator-positivity", slow=True)
def _denominators(quick):
    n, seeds = (10_000, range(2)) if quick else (100_000, range(8))
    parts, ok = [], True
    configs = [SlayFeatureConfig(poly_kind="exact"), SlayFeatureConfig(), SlayFeatureConfig(fusion="hadamard", d_prf=8),
               SlayFeatureConfig(poly_kind="none", fusion="none")]
    for cfg in configs:
        st = analysis.denominator_sweep(cfg, n, seeds)
        ok &= st.guaranteed_nonneg and st.fraction_negative == 0
        parts.append(f"{cfg.poly_kind}/{cfg.fusion}: {st.fraction_negative}")
    return ok, "fraction negative " + ", ".join(parts)


@check("analysis.kernel-curve-bounded")
def _curve_bounded(quick):
    ok = True
    for eps in (1e-3, 1e-1):
        rows = analysis.kernel_curve(KernelParams(eps), np.linspace(-1, 1, 401))
        ok &= all(0 <= r["spherical_yat"] <= 1.0 / eps for r in rows)
    return ok, "every spherical value in [0, 1/eps]"


# --- bench-cli ----------------------------------------------------------------------


@check("cli.csv-schemas")
def _schemas(quick):
    from .cli import SCHEMAS, run

    import io
    import contextlib

    missing = []
    for cmd, argv in (("quadrature", ["quadrature", "--r", "2"]),
                      ("kernel-curve", ["kernel-curve", "--points", "3"])):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            run(argv)
        header = [ln for ln in buf.getvalue().splitlines() if not ln.startswith("#")][0].split(",")
        if header != list(SCHEMAS[cmd]):
            missing.append(cmd)
    return not missing, "headers match documented schemas" if not missing else f"schema drift in {missing}"


@check("cli.selftest-coverage")
def _coverage(quick):
    prefixes = {"tensor", "kernels", "quadrature", "features", "linear", "baselines", "analysis", "cli", "bench"}
    seen = {name.split(".")[0] for name in REGISTRY}
    return prefixes <= seen, f"modules covered: {sorted(seen)}"


@check("bench.scaling-separation", slow=True)
def _scaling(quick):
    return scaling_check()


@check("bench.feature-flops-linear")
def _flops(quick):
    from .bench import feature_flops
    from .mechanisms import BaselineConfig

    cfg = SlayFeatureConfig()
    pairs = [(feature_flops(n, L, 32, 8, cfg, BaselineConfig()), feature_flops(n, 2 * L, 32, 8, cfg, BaselineConfig()))
             for n in LINEAR for L in (128, 4096)]
    return all(b == 2 * a for a, b in pairs), "feature FLOP estimate doubles exactly with L"


# --- runner -------------------------------------------------------------------------


def run_checks(names=None, quick: bool = False) -> list[CheckResult]:
    names = list(REGISTRY) if names is None else list(names)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise KeyError(", ".join(unknown))
    results = []
    for name in names:
        chk = REGISTRY[name]
        if quick and chk.slow:
            results.append(CheckResult(name, "skip", "slow check skipped in quick mode", 0.0))
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = chk.fn(quick)
            status = "pass" if ok else "fail"
        except Exception as exc:  # a crashing check is a failed check
            status, detail = "error", f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, status, detail, time.perf_counter() - t0))
    return results
