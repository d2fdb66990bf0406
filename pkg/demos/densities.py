"""Densities of the true quality W and of the estimate W_hat for each group.

Writes ``law,group,x,pdf`` rows. For Normal quality the estimate is Normal
in closed form; for Pareto quality the density of W_hat is the convolution
of the Pareto density with the noise, computed by quadrature.
"""
import argparse
import csv
import json
import numpy as np

from implicit_variance import GroupNoise, Normal, Pareto
from implicit_variance.core import estimate_law, integrate, norm_pdf


def pareto_estimate_pdf(dist, sigma, t):
    f = lambda w: dist.pdf(w) * norm_pdf((t - w) / sigma) / sigma
    top = dist.effective_support()[1]
    cuts = [dist.scale, *(c for c in (t - 12 * sigma, t, t + 12 * sigma) if dist.scale < c < top), top]
    return integrate(f, cuts)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    cfg = json.loads(open(args.config, encoding="utf-8").read())
    rows = []

    normal = Normal(cfg["normal"]["mu"], cfg["normal"]["sigma"])
    noise = GroupNoise(cfg["sigma_A"], cfg["sigma_B"])
    xs = np.linspace(normal.mu - 8, normal.mu + 8, cfg["points"])
    rows += [("normal", "W", x, normal.pdf(x)) for x in xs]
    for g in "AB":
        mu, s = estimate_law(normal, noise, g)
        rows += [("normal", f"W_hat_{g}", x, norm_pdf((x - mu) / s) / s) for x in xs]

    pc = cfg["pareto"]
    pareto = Pareto(pc["scale"], pc["shape"])
    xs = np.linspace(pareto.scale - 8, pareto.scale + 8, cfg["points"])
    rows += [("pareto", "W", x, pareto.pdf(x) if x >= pareto.scale else 0.0) for x in xs]
    for g, s in (("A", pc["sigma_A"]), ("B", pc["sigma_B"])):
        rows += [("pareto", f"W_hat_{g}", x, pareto_estimate_pdf(pareto, s, x)) for x in xs]

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["law", "variable", "x", "pdf"])
        w.writerows((law, var, f"{x:.12g}", f"{float(p):.12g}") for law, var, x, p in rows)


if __name__ == "__main__":
    main()
