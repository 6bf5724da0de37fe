#!/usr/bin/env python3
"""Plot the experiment CSVs (convergence history, sweep, cost curves).

Usage: python3 scripts/plot.py <out_dir>
"""
import csv
import sys
from pathlib import Path

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required for plotting")


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


def main(out_dir):
    out = Path(out_dir)

    histories = sorted(out.glob("history_*.csv"))
    if histories:
        plt.figure()
        for path in histories:
            rows = read_csv(path)
            plt.semilogy(
                [int(r["iteration"]) for r in rows],
                [float(r["update_norm"]) for r in rows],
                label=path.stem,
            )
        plt.xlabel("iteration")
        plt.ylabel("sup-norm update")
        plt.legend()
        plt.savefig(out / "fig_convergence.png", dpi=150)

    sweep = out / "sweep.csv"
    if sweep.exists():
        rows = [r for r in read_csv(sweep) if r["status"] == "converged"]
        plt.figure()
        plt.plot([int(r["n"]) for r in rows], [float(r["control_norm"]) for r in rows], ".-")
        plt.xlabel("number of basis pairs N")
        plt.ylabel("|u_N(R0)|")
        plt.savefig(out / "fig_sweep.png", dpi=150)

    for kind, column, ylabel in [("mean_l", "mean_l", "running cost"), ("mean_ucost", "mean_ucost", "control cost")]:
        curves = sorted(out.glob("curves_*.csv"))
        if not curves:
            continue
        plt.figure()
        for path in curves:
            rows = read_csv(path)
            plt.plot([float(r["t"]) for r in rows], [float(r[column]) for r in rows], label=path.stem)
        plt.xlabel("t")
        plt.ylabel(ylabel)
        plt.legend()
        plt.savefig(out / f"fig_{kind}.png", dpi=150)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "out")
