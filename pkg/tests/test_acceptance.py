"""Acceptance criteria 1-12, each at its stated tolerance, one summary line per criterion."""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from slay.analysis import SCALES, denominator_sweep, poly_ablation, quadrature_error, summarize_ablation
from slay.bench import GIB, doubling_ratios, run_bench
from slay.features import SlayFeatureConfig, prf_features
from slay.kernels import KernelParams, pd_spot_check, spherical_yat_derivative, spherical_yat_scalar
from slay.mechanisms import BaselineConfig, run_mechanism
from slay.quadrature import gauss_laguerre, pure_laplace_identity_check, rule_for
from slay.tensor import RngStream, sample_gaussian, sample_sphere


def alignment_pair(x, d=4):
    q = np.zeros((1, d))
    k = np.zeros((1, d))
    q[0, 0] = 1.0
    k[0, 0], k[0, 1] = x, math.sqrt(max(1.0 - x * x, 0.0))
    return q, k


def test_quadrature_exactness(report):
    t0 = time.perf_counter()
    worst = 0.0
    for r in (1, 2, 4, 8):
        t, a = gauss_laguerre(r)
        for k in range(2 * r):
            worst = max(worst, abs(np.sum(a * t**k) - math.factorial(k)) / math.factorial(k))
    t2, _ = gauss_laguerre(2)
    node_err = float(np.max(np.abs(t2 - [2 - math.sqrt(2), 2 + math.sqrt(2)])))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-9 and node_err <= 1e-12 and secs < 1.0
    assert report(1, ok, f"max moment rel err {worst:.2e}, R=2 node err {node_err:.2e}, {secs:.2f}s"), "see summary"


def test_quadrature_convergence(report):
    t0 = time.perf_counter()
    p = KernelParams(0.1)
    e = {r: quadrature_error(p, r) for r in (2, 4, 8, 16, 32)}
    halving = {r: e[2 * r] / e[r] for r in (2, 4, 8)}
    secs = time.perf_counter() - t0
    ok = all(v < 0.5 for v in halving.values()) and e[32] < 1e-3 and secs < 1.0
    ratios = ", ".join(f"E({2 * r})/E({r})={v:.3f}" for r, v in halving.items())
    assert report(2, ok, f"{ratios}; E(32)={e[32]:.3e}; {secs:.2f}s"), "see summary"


def test_prf_unbiasedness(report):
    t0 = time.perf_counter()
    worst_z = 0.0
    d, D = 4, 4096
    for s in (0.1, 0.5, 1.0):
        for x in np.linspace(-1.0, 1.0, 9):
            q, k = alignment_pair(x, d)
            est = np.empty(64)
            for seed in range(64):
                omega = sample_gaussian(RngStream.named(seed, "acceptance/prf"), D, d)
                est[seed] = (prf_features(q, s, omega) @ prf_features(k, s, omega).T).item()
            target = math.exp(2 * s * x)
            # at x = -1 every draw returns exp(-2s) exactly, so the spread is pure rounding
            se = max(est.std(ddof=1) / 8.0, 1e-12 * target)
            worst_z = max(worst_z, abs(est.mean() - target) / se)
    secs = time.perf_counter() - t0
    ok = worst_z <= 3.0 and secs < 30
    assert report(3, ok, f"worst |mean - e^(2sx)| = {worst_z:.2f} SE over 27 points; {secs:.1f}s"), "see summary"


def test_boundedness(report):
    t0 = time.perf_counter()
    x = np.linspace(-1.0, 1.0, 10_000)
    details, ok = [], True
    for eps in (1e-3, 1e-1):
        f = spherical_yat_scalar(x, KernelParams(eps))
        at_peak = f[-1] == 1.0 / eps and int(np.argmax(f)) == x.size - 1
        ok &= bool(at_peak and np.all(f <= 1.0 / eps))
        details.append(f"eps={eps:g}: max {f.max():.6g} at x={x[np.argmax(f)]:.0f}")
    secs = time.perf_counter() - t0
    ok &= secs < 1.0
    assert report(4, ok, "; ".join(details) + f"; {secs:.2f}s"), "see summary"


def test_gradient_check(report):
    t0 = time.perf_counter()
    x = np.linspace(-0.99, 0.99, 1981)
    worst = 0.0
    for eps in (1e-3, 1e-1):
        p = KernelParams(eps)
        h = 1e-6
        fd = (spherical_yat_scalar(x + h, p) - spherical_yat_scalar(x - h, p)) / (2 * h)
        an = spherical_yat_derivative(x, p)
        nz = np.abs(an) > 1e-8
        worst = max(worst, float(np.max(np.abs(fd[nz] - an[nz]) / np.abs(an[nz]))))
        worst = max(worst, float(np.max(np.abs(fd[~nz] - an[~nz]))) if np.any(~nz) else 0.0)
    secs = time.perf_counter() - t0
    ok = worst <= 1e-5 and secs < 1.0
    assert report(5, ok, f"max rel diff {worst:.2e}; {secs:.2f}s"), "see summary"


def test_pd_spot_check(report):
    t0 = time.perf_counter()
    lowest = np.inf
    for eps in (1e-2, 1e-1):
        for d in (2, 8):
            for trial in range(20):
                pts = sample_sphere(RngStream.named(trial, f"acceptance/pd/{d}"), 50, d)
                lowest = min(lowest, pd_spot_check(pts, KernelParams(eps)))
    secs = time.perf_counter() - t0
    ok = lowest >= -1e-8 and secs < 10
    assert report(6, ok, f"min Gram eigenvalue {lowest:.3e} over 80 sets; {secs:.2f}s"), "see summary"


def test_linear_explicit_equivalence(report):
    t0 = time.perf_counter()
    slay_cfgs = [
        SlayFeatureConfig(poly_kind="exact"),
        SlayFeatureConfig(poly_kind="anchor"),
        SlayFeatureConfig(poly_kind="anchor", fusion="sketch", d_t=256),
        SlayFeatureConfig(poly_kind="anchor", fusion="hadamard", p_anchors=16),
    ]
    cases = [("slay", c) for c in slay_cfgs] + [(n, SlayFeatureConfig()) for n in ("favor", "elu1", "cosformer")]
    worst = 0.0
    for name, cfg in cases:
        for L in (1, 2, 32, 64):
            q, k, v = np.random.default_rng(L).standard_normal((3, L, 16))
            for causal in (False, True):
                a = run_mechanism(name, q, k, v, cfg, causal=causal).y
                b = run_mechanism(name, q, k, v, cfg, causal=causal, explicit=True).y
                scale = max(np.linalg.norm(b), 1e-300)
                worst = max(worst, float(np.linalg.norm(a - b) / scale))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 30
    assert report(7, ok, f"max rel diff {worst:.2e} over {len(cases)} maps x 4 lengths x 2 masks; {secs:.1f}s"), "see summary"


def test_denominator_positivity(report):
    t0 = time.perf_counter()
    seeds = range(8)
    frac = {}
    for kind in ("exact", "anchor"):
        frac[kind] = denominator_sweep(SlayFeatureConfig(poly_kind=kind), 100_000, seeds).fraction_negative
    for kind, dp in (("tensorsketch", 64), ("random-maclaurin", 64)):
        frac[kind] = denominator_sweep(SlayFeatureConfig(poly_kind=kind, d_p=dp), 100_000, seeds).fraction_negative
    secs = time.perf_counter() - t0
    ok = frac["exact"] == 0 and frac["anchor"] == 0 and frac["tensorsketch"] > 0 and frac["random-maclaurin"] > 0
    ok &= secs < 60
    detail = ", ".join(f"{k} {v:.4f}" for k, v in frac.items())
    assert report(8, ok, f"fraction negative: {detail}; {secs:.1f}s"), "see summary"


def test_fidelity_ordering(report):
    t0 = time.perf_counter()
    variants = ("anchor", "nystrom", "tensorsketch")
    summary = {s["variant"]: s for s in summarize_ablation(
        poly_ablation(SCALES["paper-default"], range(5), variants, timing=False))}
    large = summarize_ablation(poly_ablation(SCALES["large"], range(5), ("anchor",), timing=False))[0]
    secs = time.perf_counter() - t0
    rel = {v: summary[v]["rel_l2"] for v in variants}
    ok = rel["anchor"] < rel["nystrom"] < rel["tensorsketch"] and large["cosine"] > 0.7 and secs < 300
    detail = ", ".join(f"{v} {rel[v]:.3g}" for v in variants)
    assert report(9, ok, f"mean rel_l2 {detail}; large anchor cosine {large['cosine']:.3f}; {secs:.0f}s"), "see summary"


@pytest.mark.slow
def test_scaling_separation(report):
    t0 = time.perf_counter()
    cap = 4 * GIB
    lengths = (8192, 16384, 32768)
    lin = run_bench(["slay"], lengths, d_model=256, heads=8, reps=3, warmup=1, cap_bytes=cap, memory=False)
    quad = run_bench(["spherical-yat"], lengths, d_model=256, heads=8, reps=1, warmup=0, cap_bytes=cap,
                     quadratic_l_max=2**20, memory=False)
    longest = run_bench(["slay"], [131072], d_model=256, heads=8, reps=1, warmup=0, cap_bytes=cap)[0]
    lr = doubling_ratios(lin, "slay", 8192)
    qr = doubling_ratios(quad, "spherical-yat", 8192)
    beyond = [r.status for r in quad if r.L > 16384]
    secs = time.perf_counter() - t0
    ok = (len(lr) == 2 and all(r <= 2.5 for _, r in lr) and len(qr) >= 1 and all(r >= 3.2 for _, r in qr)
          and longest.status == "ok" and longest.peak_aux_bytes <= cap and beyond == ["oom"] and secs < 900)
    fmt = lambda rs: ", ".join(f"{L}->{2 * L} {r:.2f}" for L, r in rs)
    detail = (f"slay {fmt(lr)}; spherical-yat {fmt(qr)}, L>16384 {beyond}; "
              f"slay L=131072 {longest.status} peak {longest.peak_aux_bytes / GIB if longest.peak_aux_bytes else 0:.2f} GiB; "
              f"{secs:.0f}s")
    assert report(10, ok, detail), "see summary"


def test_pure_laplace_identity(report):
    t0 = time.perf_counter()
    res = pure_laplace_identity_check(np.linspace(-1.0, 1.0, 21), rule_for(48, KernelParams(0.1)))
    secs = time.perf_counter() - t0
    worst = float(res.max())
    ok = worst < 1e-3 and secs < 1.0
    where = float(np.linspace(-1, 1, 21)[np.argmax(res)])
    assert report(11, ok, f"max residual {worst:.3e} at x={where:g}; {secs:.2f}s"), "see summary"


def test_determinism(report, tmp_path):
    from slay.formats import write_tensor

    g = np.random.default_rng(0)
    for name in "qkv":
        write_tensor(tmp_path / f"{name}.bin", g.standard_normal((40, 8)))
    tensors = ["--q", str(tmp_path / "q.bin"), "--k", str(tmp_path / "k.bin"), "--v", str(tmp_path / "v.bin")]
    commands = {
        "quadrature.csv": ["quadrature", "--r", "8", "--epsilon", "0.1"],
        "sweep.csv": ["quadrature", "--sweep", "2,4,8"],
        "curve.csv": ["kernel-curve", "--points", "51"],
        "denominators.csv": ["denominator-sweep", "--pairs", "2000", "--seeds", "2"],
        "bench.csv": ["bench", "--mechanisms", "slay,spherical-yat,favor", "--lengths", "64,128", "--d-model", "32",
                      "--heads", "4"],
        "ablation.csv": ["ablate-poly", "--scale", "small", "--seeds", "1", "--variants", "exact,anchor,nystrom"],
        "y_slay.bin": ["attn", "--mechanism", "slay", "--causal", *tensors],
        "y_cos.bin": ["attn", "--mechanism", "cosformer", "--causal", *tensors],
    }
    differing = []
    for out, argv in commands.items():
        blobs = []
        for run in range(2):
            path = tmp_path / f"{run}-{out}"
            subprocess.run([sys.executable, "-m", "slay", "--deterministic", "--out", str(path), *argv],
                           check=True, env={**os.environ, "SLAY_SEED": "7"})
            blobs.append(path.read_bytes())
        if blobs[0] != blobs[1] or not blobs[0]:
            differing.append(out)
    ok = not differing
    assert report(12, ok, f"{len(commands) - len(differing)}/{len(commands)} outputs byte-identical"
                  + (f"; differing: {differing}" if differing else "")), "see summary"
