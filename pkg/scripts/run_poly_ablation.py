"""Polynomial-factor ablation at every scale: per-seed rows and the seed-averaged table."""

from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass
from pathlib import Path

from slay.analysis import SCALES, VARIANTS, poly_ablation, scale_config, summarize_ablation
from slay.cli import SCHEMAS
from slay.formats import format_csv


@dataclass
class AblationRun:
    scales: tuple[str, ...] = ("small", "medium", "large", "paper-default")
    seeds: int = 5
    epsilon: float = 1e-3
    repeats: int = 5
    warmup: int = 1
    out_dir: str = "results"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    run = AblationRun(seeds=args.seeds, out_dir=args.out_dir)
    rows = []
    for name in run.scales:
        rows += poly_ablation(SCALES[name], range(run.seeds), VARIANTS, epsilon=run.epsilon,
                              repeats=run.repeats, warmup=run.warmup)
    summary = summarize_ablation(rows)
    config = {**asdict(run), "scale_table": {n: scale_config(SCALES[n]) for n in run.scales}}
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "poly_ablation.csv").write_text(format_csv(rows, SCHEMAS["ablate-poly"], config))
    (out / "poly_ablation_summary.csv").write_text(format_csv(summary, SCHEMAS["ablate-poly-summary"], config))
    print(f"{'scale':<14}{'variant':<18}{'rel_l2':>10}{'cosine':>9}")
    for s in summary:
        print(f"{s['scale']:<14}{s['variant']:<18}{s['rel_l2']:>10.4g}{s['cosine']:>9.3f}")


if __name__ == "__main__":
    main()
