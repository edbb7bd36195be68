"""Latency / auxiliary-memory / throughput harness for attention mechanisms on CPU."""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError
from .features import SlayFeatureConfig
from .mechanisms import LINEAR, QUADRATIC, BaselineConfig, check_mechanism, feature_dim, run_mechanism
from .tensor import RngStream, sample_gaussian

GIB = 1 << 30
DEFAULT_CAP = 4 * GIB
QUADRATIC_L_MAX = 16384
LINEAR_L_MAX = 131072


@dataclass(frozen=True)
class BenchRecord:
    mechanism: str
    L: int
    d_model: int
    heads: int
    causal: bool
    seed: int
    status: str  # ok | oom | capped
    latency_ms: float | None = None
    latency_iqr_ms: float | None = None
    peak_aux_bytes: int | None = None
    estimated_aux_bytes: int = 0
    throughput_tokens_per_s: float | None = None
    feature_flops: int = 0
    dtype: str = "float64"

    def row(self) -> dict:
        return dict(self.__dict__)


COLUMNS = (
    "mechanism", "L", "d_model", "heads", "causal", "seed", "status", "latency_ms", "latency_iqr_ms",
    "peak_aux_bytes", "estimated_aux_bytes", "throughput_tokens_per_s", "feature_flops", "dtype",
)


def feature_flops(name: str, L: int, d_head: int, heads: int, cfg: SlayFeatureConfig, base: BaselineConfig) -> int:
    """Multiply-adds spent building query and key features; linear in L by construction."""
    if name in QUADRATIC:
        return 0
    if name == "slay":
        d_poly = cfg.poly_dim(d_head) if cfg.poly_kind != "none" else 0
        poly = {"exact": d_head * d_head, "anchor": d_poly * d_head, "nystrom": d_poly * (d_head + d_poly),
                "random-maclaurin": 2 * d_poly * d_head, "tensorsketch": 2 * d_head + 2 * d_poly,
                "none": 0}[cfg.poly_kind]
        per_row = poly + cfg.r * (cfg.d_prf * d_head + cfg.node_dim(d_head))
    else:
        per_row = feature_dim(name, d_head, cfg, base) * (d_head if name == "favor" else 1)
    return 2 * heads * L * per_row


def estimate_aux_bytes(name: str, L: int, d_head: int, cfg: SlayFeatureConfig, base: BaselineConfig, itemsize: int = 8) -> int:
    """Upper estimate of the largest transient allocation set of one head's forward pass."""
    vectors = 6 * L * d_head * itemsize
    if name in QUADRATIC:
        # one dense L x L score buffer plus a row block of masks / denominators
        return L * L * itemsize + 1024 * L * (itemsize + 1) + vectors
    m = feature_dim(name, d_head, cfg, base)
    # psi(Q), psi(K), per-node blocks before concatenation, and a chunk of intermediates
    return 4 * L * m * 8 + vectors + 128 * 128 * 8


def bench_inputs(seed: int, L: int, d_model: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(sample_gaussian(RngStream.named(seed, f"bench/{n}"), L, d_model) for n in "qkv")


def _forward(name, q, k, v, heads, cfg, base, causal, mode, dtype):
    outs = []
    for qh, kh, vh in zip(np.split(q, heads, axis=1), np.split(k, heads, axis=1), np.split(v, heads, axis=1)):
        outs.append(run_mechanism(name, qh, kh, vh, cfg, causal=causal, mode=mode, base=base, dtype=dtype).y)
    return np.concatenate(outs, axis=1)


def measure_peak_bytes(fn) -> int:
    """Peak bytes allocated (as seen by tracemalloc) while ``fn`` runs, above the starting level."""
    started = tracemalloc.is_tracing()
    if not started:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    try:
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not started:
            tracemalloc.stop()
    return int(max(peak - base, 0))


def run_bench(
    mechanisms,
    l_values,
    d_model: int = 256,
    heads: int = 8,
    reps: int = 5,
    warmup: int = 1,
    causal: bool = True,
    cfg: SlayFeatureConfig = SlayFeatureConfig(),
    base: BaselineConfig = BaselineConfig(),
    cap_bytes: int = DEFAULT_CAP,
    quadratic_l_max: int = QUADRATIC_L_MAX,
    linear_l_max: int = LINEAR_L_MAX,
    threads: int = 1,
    dtype=np.float64,
    mode: str = "chunked",
    timing: bool = True,
    memory: bool = True,
    collect_outputs: bool = False,
):
    """One :class:`BenchRecord` per (mechanism, L).

    Mechanisms whose preflight memory estimate exceeds ``cap_bytes`` (or whose
    measured peak does) are recorded as ``oom``; lengths above the per-family
    limit are ``capped``. Heads run one after another and latencies cover all
    of them. With ``collect_outputs`` the layer outputs are also returned.
    """
    l_values = [int(L) for L in l_values]
    if any(b <= a for a, b in zip(l_values, l_values[1:])):
        raise ConfigError("sequence lengths must be strictly ascending")
    if d_model % heads:
        raise ConfigError(f"d_model {d_model} is not divisible by {heads} heads")
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    for name in mechanisms:
        check_mechanism(name)
    d_head = d_model // heads
    itemsize = np.dtype(dtype).itemsize
    records, outputs = [], {}
    with threadpool_limits(limits=threads):
        for name in mechanisms:
            limit = quadratic_l_max if name in QUADRATIC else linear_l_max
            for L in l_values:
                common = dict(mechanism=name, L=L, d_model=d_model, heads=heads, causal=causal, seed=cfg.seed,
                              dtype=np.dtype(dtype).name,
                              estimated_aux_bytes=estimate_aux_bytes(name, L, d_head, cfg, base, itemsize),
                              feature_flops=feature_flops(name, L, d_head, heads, cfg, base))
                if common["estimated_aux_bytes"] > cap_bytes:
                    records.append(BenchRecord(status="oom", **common))
                    continue
                if L > limit:
                    records.append(BenchRecord(status="capped", **common))
                    continue
                q, k, v = bench_inputs(cfg.seed, L, d_model)

                def call():
                    return _forward(name, q, k, v, heads, cfg, base, causal, mode, dtype)

                peak = measure_peak_bytes(call) if memory else None
                if peak is not None and peak > cap_bytes:
                    records.append(BenchRecord(status="oom", peak_aux_bytes=peak, **common))
                    continue
                latency = iqr = throughput = None
                if timing:
                    for _ in range(warmup):
                        y = call()
                    times = []
                    for _ in range(reps):
                        t0 = time.perf_counter()
                        y = call()
                        times.append((time.perf_counter() - t0) * 1e3)
                    q1, latency, q3 = (float(t) for t in np.percentile(times, [25, 50, 75]))
                    iqr = q3 - q1
                    throughput = L / (latency / 1e3)
                elif collect_outputs:
                    y = call()
                if collect_outputs:
                    outputs[(name, L)] = y
                records.append(BenchRecord(status="ok", latency_ms=latency, latency_iqr_ms=iqr, peak_aux_bytes=peak,
                                           throughput_tokens_per_s=throughput, **common))
    return (records, outputs) if collect_outputs else records


def doubling_ratios(records, mechanism: str, min_length: int = 0) -> list[tuple[int, float]]:
    """(L, latency(2L)/latency(L)) for consecutive successful doublings."""
    ok = {r.L: r.latency_ms for r in records if r.mechanism == mechanism and r.status == "ok" and r.latency_ms}
    return [(L, ok[2 * L] / ok[L]) for L in sorted(ok) if L >= min_length and 2 * L in ok]
