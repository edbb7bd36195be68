"""Latency, auxiliary memory and throughput versus sequence length for every mechanism.

Writes one CSV with the ``bench`` column set and prints the doubling ratios
for L >= 8192.
"""

from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field
from pathlib import Path

from slay.bench import GIB, COLUMNS, doubling_ratios, run_bench
from slay.formats import format_csv
from slay.mechanisms import LABELS


@dataclass
class ScalingRun:
    mechanisms: tuple[str, ...] = ("slay", "spherical-yat", "softmax", "favor", "elu1", "cosformer")
    lengths: tuple[int, ...] = field(default_factory=lambda: tuple(128 * 2**i for i in range(11)))
    d_model: int = 256
    heads: int = 8
    reps: int = 3
    cap_gib: float = 4.0
    threads: int = 1
    out: str = "results/scaling.csv"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-length", type=int, default=131072)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--out", default=ScalingRun.out)
    args = ap.parse_args()
    run = ScalingRun(reps=args.reps, out=args.out)
    run.lengths = tuple(L for L in run.lengths if L <= args.max_length)
    records = run_bench(run.mechanisms, run.lengths, run.d_model, run.heads, reps=run.reps,
                        cap_bytes=int(run.cap_gib * GIB), threads=run.threads)
    rows = [{**r.row(), "mechanism": LABELS.get(r.mechanism, r.mechanism)} for r in records]
    out = Path(run.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_csv(rows, COLUMNS, asdict(run)))
    for name in run.mechanisms:
        ratios = doubling_ratios(records, name, min_length=8192)
        if ratios:
            print(name, " ".join(f"{L}->{2 * L}: {r:.2f}" for L, r in ratios))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
