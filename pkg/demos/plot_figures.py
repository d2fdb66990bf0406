"""Example plots from the tables written by run_all.sh (needs matplotlib).

The CSV files are the artifact's output; this script only shows one way to
draw them. Figures are saved next to the tables as PNG files.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required for the example plots: pip install matplotlib")

OUT = Path(__file__).parent / "output"


def read(name):
    with open(OUT / name, newline="") as fh:
        return list(csv.DictReader(fh))


def by(rows, key):
    groups = defaultdict(list)
    for r in rows:
        groups[r[key]].append(r)
    return groups


def utility_vs_xA():
    rows = read("utility_vs_xA.csv")
    fig, axes = plt.subplots(1, 4, figsize=(14, 3), sharey=False)
    for ax, (a1, part) in zip(axes, by(rows, "alpha1").items()):
        fixed = [r for r in part if r["algorithm"] == "fixed"]
        ax.plot([float(r["x_A"]) for r in fixed], [float(r["Q"]) for r in fixed], "k-")
        for r in part:
            if r["algorithm"] != "fixed":
                ax.plot(float(r["x_A"]), float(r["Q"]), "o", label=r["algorithm"])
        ax.set_title(f"alpha1 = {a1}")
        ax.set_xlabel("x_A")
    axes[0].set_ylabel("Q")
    axes[-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(OUT / "utility_vs_xA.png", dpi=120)


def gap_curves(prefix, title):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in (1, 2, 3, 4):
        path = OUT / f"{prefix}_sigmaA{s}.csv"
        if not path.exists():
            continue
        dp = [r for r in read(path.name) if r["algorithm"] == "dp"]
        x = [float(r["alpha1"]) if "alpha1" in r else int(r["m1"]) / int(r["n"]) for r in dp]
        gap = [float(r.get("gap_vs_oblivious") or r["gap_of_means"]) for r in dp]
        ax.plot(x, gap, label=f"sigma_A = {s}")
    ax.axhline(0, color="grey", lw=0.5)
    ax.set_xlabel("alpha1")
    ax.set_ylabel("(Q_dp - Q_obl) / Q_obl")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(OUT / f"{prefix}_gap.png", dpi=120)


def finite_n():
    rows = [r for r in read("finite_n.csv") if r["n"] == "100"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, part in by(rows, "algorithm").items():
        m1 = [int(r["m1"]) for r in part]
        q = [float(r["mean_Q"]) for r in part]
        se = [float(r["std_err"]) for r in part]
        ax.fill_between(m1, [a - b for a, b in zip(q, se)], [a + b for a, b in zip(q, se)], alpha=0.3)
        ax.plot(m1, q, label=f"{name}, simulated")
        ax.plot(m1, [float(r["asymptotic_Q"]) for r in part], "--", label=f"{name}, limit")
    ax.set_xlabel("m1")
    ax.set_ylabel("<Q_n>")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(OUT / "finite_n.png", dpi=120)


def dataset(name):
    rows = [r for r in read(f"{name}.csv") if r["algorithm"] == "dp"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, part in by(rows, "k").items():
        ax.plot([float(r["alpha1"]) for r in part], [float(r["gap"]) for r in part], "o-", label=f"k = {k}")
    ax.axhline(0, color="grey", lw=0.5)
    ax.set_xlabel("alpha1")
    ax.set_ylabel("gap of dp")
    ax.legend()
    fig.tight_layout()
    fig.savefig(OUT / f"{name}.png", dpi=120)


if __name__ == "__main__":
    utility_vs_xA()
    gap_curves("one_stage", "one stage, normal quality")
    gap_curves("two_stage", "two stages, alpha2 = 0.1")
    gap_curves("pareto_one_stage", "one stage, Pareto(1, 3) quality")
    finite_n()
    dataset("dataset_one_stage")
    dataset("dataset_two_stage")
    print(f"figures written to {OUT}")
