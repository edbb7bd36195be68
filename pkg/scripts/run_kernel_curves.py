"""Kernel response curves and quadrature convergence for several epsilon values."""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from slay.analysis import kernel_curve, quadrature_convergence_sweep
from slay.cli import SCHEMAS
from slay.formats import format_csv
from slay.kernels import KernelParams


@dataclass
class CurveRun:
    epsilons: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0)
    node_counts: tuple[int, ...] = (1, 2, 3, 4, 8, 16, 32, 48, 64)
    curve_nodes: int = 3
    points: int = 201
    out_dir: str = "results"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    run = CurveRun(out_dir=ap.parse_args().out_dir)
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(-1.0, 1.0, run.points)
    for eps in run.epsilons:
        p = KernelParams(eps)
        cfg = {"epsilon": eps, "r": run.curve_nodes, "points": run.points}
        (out / f"kernel_curve_eps{eps:g}.csv").write_text(
            format_csv(kernel_curve(p, grid, run.curve_nodes), SCHEMAS["kernel-curve"], cfg))
        sweep = quadrature_convergence_sweep(p, run.node_counts)
        (out / f"quadrature_sweep_eps{eps:g}.csv").write_text(
            format_csv(sweep, SCHEMAS["quadrature-sweep"], {"epsilon": eps}))
        print(f"eps={eps:g}: " + ", ".join(f"E({r['r']})={r['max_abs_error']:.2e}" for r in sweep))


if __name__ == "__main__":
    main()
