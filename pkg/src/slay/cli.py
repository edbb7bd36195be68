"""``slay`` command line: benchmarks, ablations, kernel tables, file-based attention and self-tests.

Exit codes: 0 ok, 1 usage or failed self-test, 2 tensor/file I/O, 3 config, 4 numeric.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis, bench, formats, quadrature
from .errors import ConfigError, SlayError
from .features import PRESETS, SlayFeatureConfig
from .kernels import DEFAULT_EPSILON, KernelParams
from .mechanisms import LABELS, MECHANISMS, BaselineConfig, run_mechanism

SCHEMAS = {
    "quadrature": ("index", "t", "alpha", "s", "w"),
    "quadrature-sweep": ("r", "max_abs_error"),
    "kernel-curve": ("x", "spherical_yat", "quadrature", "softmax"),
    "denominator-sweep": ("poly_kind", "fusion", "d_p", "min_value", "fraction_negative", "n_samples",
                          "guaranteed_nonneg"),
    "ablate-poly": ("scale", "variant", "seed", "T", "R", "M", "P", "rel_l2", "cosine", "mse",
                    "heads_rel_l2", "heads_cosine", "latency_ms"),
    "ablate-poly-summary": ("scale", "variant", "seeds", "T", "R", "M", "P", "rel_l2", "cosine", "mse",
                            "heads_rel_l2", "heads_cosine", "latency_ms"),
    "bench": bench.COLUMNS,
    "selftest": ("check", "status", "seconds", "detail"),
}

EPILOG = "CSV columns:\n" + "\n".join(f"  {k}: {', '.join(v)}" for k, v in SCHEMAS.items())


class UsageError(SlayError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def load_config(args) -> SlayFeatureConfig:
    """Preset or JSON file, then ``SLAY_SEED`` and explicit ``--seed`` overrides."""
    cfg = PRESETS[args.preset] if getattr(args, "preset", None) else SlayFeatureConfig()
    if getattr(args, "config", None):
        cfg = SlayFeatureConfig.load(args.config)
    env = os.environ.get("SLAY_SEED")
    if env is not None:
        try:
            cfg = cfg.with_(seed=int(env))
        except ValueError:
            raise ConfigError(f"SLAY_SEED must be an integer, got {env!r}") from None
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _emit(rows, schema: str, config: dict, out) -> None:
    formats.emit_csv(formats.format_csv(rows, SCHEMAS[schema], config), out)


def _add_config_args(p):
    p.add_argument("--config", help="SlayFeatureConfig JSON file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named feature configuration")
    p.add_argument("--seed", type=int, help="override the config seed")


def _add_global_args(p, out, deterministic, threads):
    p.add_argument("--deterministic", action="store_true", default=deterministic,
                   help="one thread, serial causal scan, timings and memory reported as NA")
    p.add_argument("--threads", type=int, default=threads, help="BLAS threads for benchmarks (default 1)")
    p.add_argument("--out", default=out, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slay", description=__doc__.splitlines()[0], epilog=EPILOG,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_global_args(parser, "-", False, 1)
    # the same flags may follow the subcommand; SUPPRESS keeps the top-level values unless given
    common = argparse.ArgumentParser(add_help=False)
    _add_global_args(common, argparse.SUPPRESS, argparse.SUPPRESS, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("quadrature", help="Gauss-Laguerre nodes and scaled weights")
    p.add_argument("--r", type=int, default=quadrature.DEFAULT_NODES)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--sweep", type=_int_list, help="report max kernel error for these node counts instead")

    p = add("kernel-curve", help="kernel response over alignment x in [-1, 1]")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--r", type=int, default=quadrature.DEFAULT_NODES)
    p.add_argument("--points", type=int, default=201)

    p = add("denominator-sweep", help="sign statistics of approximate pairwise scores")
    _add_config_args(p)
    p.add_argument("--poly-kinds", type=_str_list, default=["exact", "anchor", "nystrom", "tensorsketch", "random-maclaurin"])
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--dim", type=int, default=8)

    p = add("ablate-poly", help="polynomial-factor fidelity ablation")
    p.add_argument("--scale", choices=sorted(analysis.SCALES) + ["all"], default="paper-default")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", type=_str_list, default=list(analysis.VARIANTS))
    p.add_argument("--summary", action="store_true", help="average over seeds")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--warmup", type=int, default=5)

    p = add("bench", help="latency / memory / throughput versus sequence length")
    _add_config_args(p)
    p.add_argument("--mechanisms", type=_str_list, default=["slay", "spherical-yat", "softmax", "favor", "elu1", "cosformer"])
    p.add_argument("--lengths", type=_int_list,
                   default=[128 * 2**i for i in range(11)])
    p.add_argument("--d-model", type=int, default=256)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--cap-gib", type=float, default=4.0)
    p.add_argument("--quadratic-l-max", type=int, default=bench.QUADRATIC_L_MAX)
    p.add_argument("--linear-l-max", type=int, default=bench.LINEAR_L_MAX)
    p.add_argument("--non-causal", action="store_true")
    p.add_argument("--f32", action="store_true", help="run the contraction in float32")

    p = add("attn", help="attention over SLAY binary tensors")
    _add_config_args(p)
    p.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p.add_argument("--q", required=True)
    p.add_argument("--k", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--causal", action="store_true")
    p.add_argument("--mode", choices=("serial", "chunked"), default="serial")
    p.add_argument("--favor-features", type=int, default=64)
    p.add_argument("--favor-normalize", action="store_true")

    p = add("selftest", help="run the invariant checks")
    p.add_argument("--list", action="store_true", help="list check names and exit")
    p.add_argument("--only", type=_str_list, help="comma-separated check names")
    p.add_argument("--quick", action="store_true", help="skip slow checks")
    return parser


# --- subcommands ----------------------------------------------------------------------


def cmd_quadrature(args) -> int:
    p = KernelParams(args.epsilon)
    if args.sweep:
        rows = analysis.quadrature_convergence_sweep(p, args.sweep)
        _emit(rows, "quadrature-sweep", {"epsilon": args.epsilon, "grid_points": analysis.CONVERGENCE_GRID}, args.out)
        return 0
    rule = quadrature.rule_for(args.r, p)
    rows = [{"index": i + 1, "t": rule.t[i], "alpha": rule.alpha[i], "s": rule.s[i], "w": rule.w[i]} for i in range(rule.r)]
    _emit(rows, "quadrature", {"r": args.r, "epsilon": args.epsilon, "c": rule.c}, args.out)
    return 0


def cmd_kernel_curve(args) -> int:
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    rows = analysis.kernel_curve(KernelParams(args.epsilon), np.linspace(-1.0, 1.0, args.points), args.r)
    _emit(rows, "kernel-curve", {"epsilon": args.epsilon, "r": args.r, "points": args.points}, args.out)
    return 0


def cmd_denominator_sweep(args) -> int:
    base = load_config(args)
    rows = []
    for kind in args.poly_kinds:
        cfg = base.with_(poly_kind=kind, fusion="none" if kind == "none" else (
            "kronecker" if base.fusion == "none" else base.fusion))
        st = analysis.denominator_sweep(cfg, args.pairs, range(cfg.seed, cfg.seed + args.seeds), args.dim)
        rows.append({"poly_kind": kind, "fusion": cfg.fusion, "d_p": cfg.poly_dim(args.dim), **st.row()})
    _emit(rows, "denominator-sweep", {"config": base.to_dict(), "pairs": args.pairs, "seeds": args.seeds, "dim": args.dim}, args.out)
    return 0


def cmd_ablate_poly(args, deterministic: bool) -> int:
    unknown = [v for v in args.variants if v not in analysis.VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variant(s) {unknown}; choose from {list(analysis.VARIANTS)}")
    scales = list(analysis.SCALES) if args.scale == "all" else [args.scale]
    rows = []
    for name in scales:
        rows += analysis.poly_ablation(analysis.SCALES[name], range(args.seeds), args.variants, epsilon=args.epsilon,
                                       timing=not deterministic, repeats=args.repeats, warmup=args.warmup)
    schema = "ablate-poly"
    if args.summary:
        rows, schema = analysis.summarize_ablation(rows), "ablate-poly-summary"
    config = {"scales": {n: analysis.scale_config(analysis.SCALES[n]) for n in scales}, "seeds": args.seeds,
              "epsilon": args.epsilon, "deterministic": deterministic}
    _emit(rows, schema, config, args.out)
    return 0


def cmd_bench(args, deterministic: bool) -> int:
    unknown = [m for m in args.mechanisms if m not in MECHANISMS]
    if unknown:
        raise UsageError(f"unknown mechanism(s) {unknown}; choose from {', '.join(MECHANISMS)}")
    cfg = load_config(args)
    dtype = np.float32 if args.f32 else np.float64
    records = bench.run_bench(
        args.mechanisms, args.lengths, d_model=args.d_model, heads=args.heads, reps=args.reps, warmup=args.warmup,
        causal=not args.non_causal, cfg=cfg, cap_bytes=int(args.cap_gib * bench.GIB),
        quadratic_l_max=args.quadratic_l_max, linear_l_max=args.linear_l_max,
        threads=1 if deterministic else args.threads, dtype=dtype,
        mode="serial" if deterministic else "chunked", timing=not deterministic, memory=not deterministic,
    )
    rows = [{**r.row(), "mechanism": LABELS.get(r.mechanism, r.mechanism)} for r in records]
    config = {"config": cfg.to_dict(), "cap_gib": args.cap_gib, "threads": 1 if deterministic else args.threads,
              "deterministic": deterministic}
    _emit(rows, "bench", config, args.out)
    return 0


def cmd_attn(args, deterministic: bool) -> int:
    cfg = load_config(args)
    q, k, v = (formats.read_tensor(p) for p in (args.q, args.k, args.v))
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise formats.TensorFormatError(f"incompatible shapes q{q.shape} k{k.shape} v{v.shape}")
    out_dtype = np.result_type(q, k, v)
    base = BaselineConfig(favor_features=args.favor_features, favor_normalize=args.favor_normalize)
    mode = "serial" if deterministic else args.mode
    res = run_mechanism(args.mechanism, q, k, v, cfg, causal=args.causal, mode=mode, base=base)
    if not res.ok:
        print(f"warning: {res.diagnostic()}", file=sys.stderr)
    if args.out == "-":
        sys.stdout.buffer.write(formats.encode_tensor(res.y, out_dtype))
    else:
        formats.write_tensor(args.out, res.y, out_dtype)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import REGISTRY, run_checks

    if args.list:
        for name, chk in REGISTRY.items():
            print(f"{name}{'  (slow)' if chk.slow else ''}")
        return 0
    try:
        results = run_checks(args.only, quick=args.quick)
    except KeyError as exc:
        raise UsageError(f"unknown check(s): {exc.args[0]}") from None
    rows = [{"check": r.name, "status": r.status, "seconds": round(r.seconds, 3), "detail": r.detail} for r in results]
    _emit(rows, "selftest", None, args.out)
    failed = [r.name for r in results if r.status in ("fail", "error")]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    det = args.deterministic
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.command == "quadrature":
        return cmd_quadrature(args)
    if args.command == "kernel-curve":
        return cmd_kernel_curve(args)
    if args.command == "denominator-sweep":
        return cmd_denominator_sweep(args)
    if args.command == "ablate-poly":
        return cmd_ablate_poly(args, det)
    if args.command == "bench":
        return cmd_bench(args, det)
    if args.command == "attn":
        if det:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=1):
                return cmd_attn(args, det)
        return cmd_attn(args, det)
    return cmd_selftest(args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except SlayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
