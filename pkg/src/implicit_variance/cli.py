"""Command-line entry point: ``implicit-variance <subcommand> [options]``.

Every subcommand reads an optional JSON config; flags given on the command
line override the file. Results are written as CSV with a fixed header.
Exit codes: 0 success, 1 failed invariant, 2 usage, configuration or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks
from .asymptotic import (
    Budgets,
    GroupOblivious,
    InfeasibleBudget,
    ModelParams,
    feasible_xA_interval,
    parse_algorithm,
    performance_gap,
    run_algorithm,
    sign_change_intervals,
    utility_Q,
)
from .core import Beta, DomainError, GaussianMixture, GroupNoise, Normal, Pareto, Uniform
from .dataset import (
    DatasetExperimentConfig,
    ScoreFileError,
    histograms,
    load_scores,
    run_dataset_experiment,
    synthetic_exam_scores,
    write_scores,
)
from .montecarlo import ConfigError, SimConfig, compare

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2

CURVE_HEADER = ["alpha1", "algorithm", "x_A", "x_B", "y_A", "y_B", "Q", "gap_vs_oblivious"]
MC_HEADER = ["n", "m1", "m2", "algorithm", "mean_Q", "std_err", "mean_xA", "mean_xB",
             "gap_mean", "gap_std_err", "gap_of_means", "asymptotic_Q", "z_vs_asymptotic",
             "within_1se", "within_2se", "replications"]
DATASET_HEADER = ["alpha1", "k", "algorithm", "m1", "m2", "mean_Q", "std_err", "gap", "mean_xA", "mean_xB",
                  "replications"]
HIST_HEADER = ["group", "kind", "bin_left", "bin_right", "count"]


class UsageError(Exception):
    pass


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.12g}"


def write_csv(header, rows, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise UsageError(f"cannot write {out}: {exc}") from exc


# --------------------------------------------------------------------------
# configuration


def load_config(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def merge(cfg, args, keys):
    """Command-line values (when given) override the config file."""
    out = dict(cfg)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def parse_grid(spec, name, problems, integer=False):
    """A grid is a list, a ``{start, stop, count}`` object, ``"a:b:n"`` or ``"a,b,c"``."""
    try:
        if isinstance(spec, str):
            spec = spec.strip()
            if ":" in spec:
                start, stop, count = spec.split(":")
                spec = {"start": float(start), "stop": float(stop), "count": int(count)}
            else:
                spec = [float(v) for v in spec.split(",") if v.strip()]
        if isinstance(spec, dict):
            vals = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
        elif isinstance(spec, (list, tuple)):
            vals = np.array([float(v) for v in spec])
        elif isinstance(spec, (int, float)):
            vals = np.array([float(spec)])
        else:
            raise TypeError
    except (TypeError, ValueError, KeyError):
        problems.append(f"{name}: cannot read grid {spec!r}")
        return []
    if vals.size == 0:
        problems.append(f"{name}: grid is empty")
    if integer:
        return [int(round(v)) for v in vals]
    return [float(np.round(v, 12)) for v in vals]


def parse_distribution(spec, problems):
    spec = spec or {"kind": "normal"}
    kind = str(spec.get("kind", "normal")).lower()
    try:
        if kind == "normal":
            return Normal(float(spec.get("mu", 1.0)), float(spec.get("sigma", 1.0)))
        if kind == "pareto":
            return Pareto(float(spec.get("scale", 1.0)), float(spec.get("shape", 3.0)))
        if kind == "uniform":
            return Uniform(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
        if kind == "beta":
            return Beta(float(spec["shape1"]), float(spec["shape2"]),
                        loc=float(spec.get("loc", 0.0)), scale=float(spec.get("scale", 1.0)))
        if kind == "mixture":
            return GaussianMixture(tuple(tuple(float(v) for v in c) for c in spec["components"]))
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"distribution {kind}: {exc}")
        return None
    problems.append(f"unknown distribution kind {kind!r}")
    return None


def parse_model(cfg, problems):
    dist = parse_distribution(cfg.get("distribution"), problems)
    try:
        noise = GroupNoise(float(cfg.get("sigma_A", 3.0)), float(cfg.get("sigma_B", 0.2)))
        params = ModelParams(float(cfg.get("p_A", 0.4)), dist if dist is not None else Normal(),
                             noise)
    except (TypeError, ValueError) as exc:
        problems.append(f"model: {exc}")
        return None
    return params


def parse_algorithms(names, problems, allow_optimal=True):
    names = names or ["oblivious", "gamma=0.8", "dp", "optimal"]
    if isinstance(names, str):
        names = [v.strip() for v in names.split(",") if v.strip()]
    out = []
    for name in names:
        try:
            spec = parse_algorithm(name)
        except ValueError as exc:
            problems.append(str(exc))
            continue
        if not allow_optimal and spec.name == "optimal":
            problems.append("the Bayesian-optimal rule is only available in asymptotic-curve")
            continue
        out.append(spec)
    return out


def fail_if(problems):
    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))


# --------------------------------------------------------------------------
# subcommands


def curve_rows(params, alphas, alpha2, specs, threads=1, xa_points=0):
    """One row per (alpha1, algorithm), in grid order.

    With ``xa_points > 0`` each alpha1 also gets that many rows labelled
    ``fixed``, evaluating the utility at evenly spaced feasible x_A.
    """
    obl = GroupOblivious()

    def point(a1):
        try:
            budgets = Budgets(a1, alpha2 if alpha2 is not None and alpha2 < a1 else None)
            if alpha2 is not None and alpha2 > a1:
                raise ValueError(f"alpha2={alpha2} exceeds alpha1")
            ref = run_algorithm(obl, params, budgets).utility
            rows = []
            for spec in specs:
                o = run_algorithm(spec, params, budgets)
                rows.append((a1, spec.name, o.x_A, o.x_B, o.y_A, o.y_B, o.utility, performance_gap(o.utility, ref)))
            if xa_points:
                lo, hi = feasible_xA_interval(params, a1)
                for x in np.linspace(lo, hi, xa_points):
                    o = utility_Q(float(x), params, budgets)
                    rows.append((a1, "fixed", o.x_A, o.x_B, o.y_A, o.y_B, o.utility,
                                 performance_gap(o.utility, ref)))
            return rows
        except (ValueError, DomainError, InfeasibleBudget, ArithmeticError) as exc:
            raise ConfigError(f"alpha1={a1}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(point, alphas))
    else:
        parts = [point(a) for a in alphas]
    return [r for part in parts for r in part]


def report_sign_changes(rows):
    """Grid intervals where each algorithm's gap against the oblivious rule changes sign (stderr)."""
    by_alg = {}
    for a1, name, *_, gap in rows:
        if name not in ("oblivious", "fixed"):
            by_alg.setdefault(name, []).append((a1, gap))
    for name, pts in by_alg.items():
        alphas, gaps = zip(*pts)
        spans = sign_change_intervals(alphas, gaps)
        text = ", ".join(f"[{a:g}, {b:g}]" for a, b in spans) or "none on this grid"
        print(f"{name}: gap changes sign in {text}", file=sys.stderr)


def cmd_asymptotic_curve(args):
    cfg = merge(load_config(args.config), args,
                ["p_A", "sigma_A", "sigma_B", "alpha1", "alpha2", "algorithms", "xa_grid"])
    problems = []
    params = parse_model(cfg, problems)
    alphas = parse_grid(cfg.get("alpha1", {"start": 0.05, "stop": 0.95, "count": 19}), "alpha1", problems)
    alpha2 = cfg.get("alpha2")
    alpha2 = None if alpha2 is None else float(alpha2)
    if any(not 0 < a <= 1 for a in alphas):
        problems.append("alpha1 values must lie in (0, 1]")
    if alpha2 is not None and not 0 < alpha2 <= 1:
        problems.append("alpha2 must lie in (0, 1]")
    specs = parse_algorithms(cfg.get("algorithms"), problems)
    xa_points = int(cfg.get("xa_grid") or 0)
    if xa_points == 1 or xa_points < 0:
        problems.append("xa_grid needs at least two points")
    fail_if(problems)
    rows = curve_rows(params, alphas, alpha2, specs, args.threads, xa_points)
    write_csv(CURVE_HEADER, rows, args.out)
    if args.sign_changes:
        report_sign_changes(rows)
    return EXIT_OK


def montecarlo_rows(params, sizes, m1_grid, alpha1_grid, m2, alpha2, specs, replications, seed, threads=1):
    rows = []
    for n in sizes:
        m1s = m1_grid if m1_grid else sorted({math.floor(a * n) for a in alpha1_grid})
        final = m2 if m2 is not None else (None if alpha2 is None else math.floor(alpha2 * n))
        # one stage when no final count is given: m2 then follows m1
        budgets = Budgets(1.0) if final is None else Budgets(1.0, final / n)
        config = SimConfig(n, params, budgets, GroupOblivious(), replications, seed, m1=max(m1s), m2=final)
        table = compare(config, specs, GroupOblivious(), m1s, threads)
        for m1, row in zip(m1s, table):
            k2 = m1 if final is None else final
            for spec in [GroupOblivious(), *[s for s in specs if s != GroupOblivious()]]:
                pr = row[spec.name]
                res = pr.results[spec.name]
                try:
                    asym = run_algorithm(spec, params, Budgets(m1 / n, k2 / n)).utility
                except (ValueError, InfeasibleBudget):
                    asym = float("nan")
                z = (res.mean_utility - asym) / res.std_error if res.std_error > 0 else float("nan")
                bands = [int(abs(z) <= b) if math.isfinite(z) else None for b in (1, 2)]
                rows.append((n, m1, k2, spec.name, res.mean_utility, res.std_error, res.mean_xA, res.mean_xB,
                             pr.mean_gap, pr.gap_std_error, pr.gap_of_means, asym, z, *bands, replications))
    return rows


def cmd_montecarlo(args):
    cfg = merge(load_config(args.config), args,
                ["p_A", "sigma_A", "sigma_B", "n", "m1", "alpha1", "m2", "alpha2", "algorithms", "replications", "seed"])
    problems = []
    params = parse_model(cfg, problems)
    sizes = parse_grid(cfg.get("n", 100), "n", problems, integer=True)
    m1_grid = parse_grid(cfg["m1"], "m1", problems, integer=True) if cfg.get("m1") is not None else None
    alpha1_grid = None
    if m1_grid is None:
        alpha1_grid = parse_grid(cfg.get("alpha1", {"start": 0.1, "stop": 1.0, "count": 10}), "alpha1", problems)
    m2 = None if cfg.get("m2") is None else int(cfg["m2"])
    alpha2 = None if cfg.get("alpha2") is None else float(cfg["alpha2"])
    specs = parse_algorithms(cfg.get("algorithms") or ["oblivious", "dp"], problems, allow_optimal=False)
    replications = int(cfg.get("replications", 1000))
    seed = int(cfg.get("seed", 0))
    if replications < 1:
        problems.append("replications must be >= 1")
    if seed < 0 or seed >= 2**64:
        problems.append("seed must be an unsigned 64-bit integer")
    for n in sizes:
        if n < 2:
            problems.append(f"n={n} is too small")
            continue
        n_A = math.floor(params.p_A * n) if params else 1
        if not (1 <= n_A <= n - 1):
            problems.append(f"n={n}: both groups must be nonempty")
        m1s = m1_grid if m1_grid else [math.floor(a * n) for a in (alpha1_grid or [])]
        final = m2 if m2 is not None else (None if alpha2 is None else math.floor(alpha2 * n))
        for m1 in m1s:
            k2 = m1 if final is None else final
            if not 1 <= k2 <= m1 <= n:
                problems.append(f"n={n}, m1={m1}: need 1 <= m2 <= m1 <= n (m2={k2})")
    fail_if(problems)
    rows = montecarlo_rows(params, sizes, m1_grid, alpha1_grid, m2, alpha2, specs, replications, seed, args.threads)
    write_csv(MC_HEADER, rows, args.out)
    return EXIT_OK


def cmd_dataset(args):
    cfg = merge(load_config(args.config), args,
                ["input", "group_col", "score_col", "delimiter", "noisy_label", "sigma_ref", "k", "alpha1",
                 "alpha2", "replications", "seed", "algorithms"])
    if args.make_synthetic:
        labels, scores = synthetic_exam_scores(int(cfg.get("fixture_seed", 0)))
        write_scores(args.make_synthetic, labels, scores, cfg.get("group_col", "gender"),
                     cfg.get("score_col", "score"), cfg.get("delimiter", ","))
        cfg.setdefault("input", args.make_synthetic)
    if cfg.get("input") is None:
        raise UsageError("dataset needs an input file (positional argument, --make-synthetic or config 'input')")
    data = load_scores(cfg["input"], cfg.get("group_col", "gender"), cfg.get("score_col", "score"),
                       cfg.get("delimiter", ","))
    problems = []
    specs = parse_algorithms(cfg.get("algorithms") or ["oblivious", "dp"], problems, allow_optimal=False)
    if not any(isinstance(s, GroupOblivious) for s in specs):
        specs = [GroupOblivious(), *specs]
    alphas = parse_grid(cfg.get("alpha1", [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9]), "alpha1", problems)
    ks = parse_grid(cfg.get("k", [1, 4, 7, 10]), "k", problems)
    fail_if(problems)
    config = DatasetExperimentConfig(
        noisy_label=str(cfg.get("noisy_label", "w")),
        sigma_ref=float(cfg.get("sigma_ref", 10.0)),
        k_values=tuple(ks),
        alpha1_grid=tuple(alphas),
        alpha2=None if cfg.get("alpha2") is None else float(cfg["alpha2"]),
        replications=int(cfg.get("replications", 10)),
        seed=int(cfg.get("seed", 0)),
        algorithms=tuple(specs),
    )
    rows = run_dataset_experiment(data, config, args.threads)
    write_csv(DATASET_HEADER, [(r.alpha1, r.k, r.algorithm, r.m1, r.m2, r.mean_utility, r.std_error, r.gap,
                                r.mean_xA, r.mean_xB, config.replications) for r in rows], args.out)
    if args.emit_histogram:
        k_hist = float(cfg.get("histogram_k", 4))
        sigma = {label: config.sigma_ref for label in data.labels}
        sigma[config.noisy_label] = k_hist * config.sigma_ref
        write_csv(HIST_HEADER, histograms(data, sigma, bins=50, seed=config.seed), args.emit_histogram)
    return EXIT_OK


def cmd_verify(args):
    results = checks.run_suite(args.suite)
    for c in results:
        print(c.line())
    failed = sum(not c.passed for c in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_INVARIANT if failed else EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--config", help="JSON file with parameters (flags override it)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--seed", type=int, help="base seed of the random substreams")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def _model_flags(p):
    p.add_argument("--p-a", dest="p_A", type=float, help="share of group A")
    p.add_argument("--sigma-a", dest="sigma_A", type=float, help="noise level of group A")
    p.add_argument("--sigma-b", dest="sigma_B", type=float, help="noise level of group B")
    p.add_argument("--alpha1", help="first-stage budgets: 'start:stop:count' or comma list")
    p.add_argument("--alpha2", type=float, help="second-stage budget (omit for one stage)")
    p.add_argument("--algorithms", help="comma list of oblivious, gamma=<g>, dp, optimal")


def build_parser():
    parser = argparse.ArgumentParser(prog="implicit-variance",
                                     description="Selection under group-dependent estimation noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asymptotic-curve", help="large-population fractions and utilities over an alpha1 grid")
    _common(p)
    _model_flags(p)
    p.add_argument("--xa-grid", dest="xa_grid", type=int, metavar="COUNT",
                   help="also emit utilities at COUNT evenly spaced feasible x_A (algorithm 'fixed')")
    p.add_argument("--sign-changes", dest="sign_changes", action="store_true",
                   help="report on stderr where each gap changes sign along the alpha1 grid")
    p.set_defaults(func=cmd_asymptotic_curve)

    p = sub.add_parser("montecarlo", help="finite-population simulation with paired gap statistics")
    _common(p)
    _model_flags(p)
    p.add_argument("--n", help="population size(s), comma list")
    p.add_argument("--m1", help="first-stage counts: 'start:stop:count' or comma list")
    p.add_argument("--m2", type=int, help="second-stage count")
    p.add_argument("--replications", type=int, help="number of simulated populations K")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("dataset", help="noisy selection on a score file")
    _common(p)
    p.add_argument("input", nargs="?", help="delimited score file with a header row")
    p.add_argument("--group-col", dest="group_col", help="group column (default 'gender')")
    p.add_argument("--score-col", dest="score_col", help="score column (default 'score')")
    p.add_argument("--delimiter", help="field delimiter (default ',')")
    p.add_argument("--noisy-label", dest="noisy_label", help="group whose noise is k times the reference")
    p.add_argument("--sigma-ref", dest="sigma_ref", type=float, help="reference noise level (default 10)")
    p.add_argument("--k", help="noise multipliers, comma list")
    p.add_argument("--alpha1", help="first-stage budgets")
    p.add_argument("--alpha2", type=float, help="second-stage budget (omit for one stage)")
    p.add_argument("--replications", type=int, help="noise draws per cell")
    p.add_argument("--algorithms", help="comma list of oblivious, gamma=<g>, dp")
    p.add_argument("--emit-histogram", dest="emit_histogram", metavar="PATH",
                   help="also write 50-bin histograms of W and W_hat per group")
    p.add_argument("--make-synthetic", dest="make_synthetic", metavar="PATH",
                   help="write the synthetic exam-score fixture to PATH and use it as input")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("suite", nargs="?", default="all", choices=[*checks.SUITES, "all"])
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ScoreFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
