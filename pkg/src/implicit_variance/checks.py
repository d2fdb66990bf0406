"""Invariant suites run by ``implicit-variance verify`` and by the tests.

Every check returns a :class:`Check` carrying the measured quantity and the
tolerance it was held to, so reports show how much slack is left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import asymptotic as asy
from .asymptotic import (
    Budgets,
    DemographicParity,
    GammaRule,
    GroupOblivious,
    ModelParams,
    BayesianOptimal,
    run_algorithm,
)
from .core import (
    NO_CUT,
    Beta,
    GaussianMixture,
    GroupNoise,
    J,
    Normal,
    Pareto,
    Uniform,
    integrate,
    joint_tail,
    std_normal,
    tail_quality_mass,
)
from .montecarlo import GROUP_A, SimConfig, run_replications, sample_population, select_first_stage, simulate

SUITES = ("core", "asymptotic", "theorems", "montecarlo")

# mu_W = sigma_W = 1, p_A = 0.4, sigma_A = 3, sigma_B = 0.2
DEFAULT_PARAMS = ModelParams(0.4, Normal(1.0, 1.0), GroupNoise(3.0, 0.2))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{mark}  {self.name}: measured {self.measured:.3g}, tolerance {self.tolerance:.3g}{extra}"


def _max_check(name, errors, tol, detail=""):
    worst = float(np.max(np.abs(errors)))
    return Check(name, worst <= tol, worst, tol, detail)


def _margin_check(name, margins, tol, detail=""):
    """Pass when every margin exceeds ``tol``; reports the smallest margin."""
    least = float(np.min(margins))
    return Check(name, least > tol, least, tol, detail)


# --------------------------------------------------------------------------
# core


def distribution_zoo():
    return {
        "normal": Normal(1.0, 1.0),
        "pareto": Pareto(1.0, 3.0),
        "uniform": Uniform(-1.0, 2.0),
        "mixture": GaussianMixture(((0.3, -1.0, 0.5), (0.7, 2.0, 1.5))),
        "beta": Beta(2.0, 5.0, loc=1.0, scale=2.0),
    }


def core_checks():
    out = []
    u = np.linspace(-30, 30, 601)
    out.append(_max_check("cdf + ccdf = 1", std_normal("cdf", u) + std_normal("ccdf", u) - 1.0, 1e-15))
    u = np.linspace(-8, 8, 321)
    out.append(_max_check("J(u) = u Phi(u) + phi(u)",
                          J(u) - (u * std_normal("cdf", u) + std_normal("pdf", u)), 1e-10))
    quad_J = np.array([integrate(lambda t: std_normal("cdf", t), [-40.0, min(v, 0.0), v]) for v in u[::16]])
    out.append(_max_check("J against quadrature", J(u[::16]) - quad_J, 1e-10))
    probs = np.linspace(0.001, 0.999, 100)
    for name, dist in distribution_zoo().items():
        total = integrate(dist.pdf, dist.breakpoints())
        out.append(_max_check(f"{name}: pdf integrates to 1", total - 1.0, 1e-8))
        out.append(_max_check(f"{name}: cdf(ppf(q)) = q", dist.cdf(dist.ppf(probs)) - probs, 1e-8))
    dist = Normal(1.0, 1.0)
    errs = []
    for th in np.linspace(-2, 4, 5):
        for s in (0.0, 0.2, 1.0, 3.0, 10.0):
            exact = std_normal("ccdf", (th - 1.0) / math.hypot(1.0, s))
            errs.append(joint_tail(th, NO_CUT, s, dist, "quad") - exact)
    out.append(_max_check("marginal tail identity (5x5 grid)", errs, 1e-8))
    for name, dist in distribution_zoo().items():
        lo, hi = dist.ppf(0.05), dist.ppf(0.95)
        thetas = np.linspace(lo, hi, 12)
        cm = [tail_quality_mass(0.5, t, 1.0, dist) / joint_tail(0.5, t, 1.0, dist) for t in thetas]
        worst_drop = float(np.max(-np.diff(cm), initial=0.0))
        out.append(Check(f"{name}: conditional mean nondecreasing in theta", worst_drop <= 1e-12,
                         worst_drop, 1e-12))
    return out


# --------------------------------------------------------------------------
# asymptotic


ALGORITHMS = (GroupOblivious(), GammaRule(0.8), DemographicParity(), BayesianOptimal())


def gradient_grid(params, budgets, points=20):
    lo, hi = asy.feasible_xA_interval(params, budgets.alpha1)
    return lo + (hi - lo) * np.linspace(0.05, 0.95, points)


def gradient_errors(params, budgets, method="auto", points=20, step=1e-4):
    """Analytic derivative, central differences of quadrature Q, and relative errors.

    The relative error is taken against ``max(|dQ|, 1e-3 * max |dQ|)`` so a
    point that happens to sit next to the optimum is not judged on a ratio of
    truncation error to a vanishing slope.
    """
    xs = gradient_grid(params, budgets, points)
    analytic = np.array([asy.dQ_dxA(x, params, budgets, method) for x in xs])
    Q = lambda x: asy.utility_Q(x, params, budgets, method="quad").utility
    fd = np.array([(Q(x + step) - Q(x - step)) / (2 * step) for x in xs])
    scale = np.maximum(np.abs(analytic), 1e-3 * np.max(np.abs(analytic)))
    return xs, analytic, fd, np.abs(fd - analytic) / scale


def gradient_cases():
    fig = DEFAULT_PARAMS
    par = ModelParams(0.4, Pareto(1.0, 3.0), GroupNoise(2.0, 1.0))
    mix = ModelParams(0.3, GaussianMixture(((0.3, -1.0, 0.5), (0.7, 2.0, 1.5))), GroupNoise(2.0, 0.5))
    return {
        "normal": (fig, [Budgets(0.15), Budgets(0.3, 0.1)]),
        "pareto": (par, [Budgets(0.15), Budgets(0.1, 0.01)]),
        "mixture": (mix, [Budgets(0.3), Budgets(0.4, 0.1)]),
    }


def gradient_checks(methods=("auto", "quad")):
    out = []
    for name, (params, budget_list) in gradient_cases().items():
        for budgets in budget_list:
            stage = "one-stage" if budgets.one_stage else "two-stage"
            for method in methods:
                if method == "auto" and not isinstance(params.dist, Normal):
                    continue
                _, an, _, rel = gradient_errors(params, budgets, method)
                label = f"{name} {stage} ({method})"
                out.append(_max_check(f"gradient oracle {label}", rel, 1e-4))
                out.append(_margin_check(f"concavity {label}", -np.diff(an), 0.0,
                                         "smallest decrease of dQ/dx_A"))
    return out


def asymptotic_checks():
    p = DEFAULT_PARAMS
    out = []
    cons1, cons2, fair, sandwich = [], [], [], []
    for a1 in (0.15, 0.35, 0.6, 0.8):
        for a2 in (None, 0.1):
            b = Budgets(a1, a2)
            for spec in ALGORITHMS:
                o = run_algorithm(spec, p, b)
                cons1.append(p.p_A * o.x_A + p.p_B * o.x_B - b.alpha1)
                cons2.append(p.p_A * o.y_A + p.p_B * o.y_B - b.alpha2)
    out.append(_max_check("first-stage budget conservation", cons1, 1e-9))
    out.append(_max_check("second-stage budget conservation", cons2, 1e-9))
    for g in (0.2, 0.8, 1.0):
        for a1 in (0.1, 0.3, 0.5, 0.7, 0.9):
            x_A = asy.fraction_gamma_rule(p, a1, g)
            x_B = (a1 - p.p_A * x_A) / p.p_B
            fair.append(max(0.0, g * x_B - x_A - 1e-12, g * x_A - x_B - 1e-12))
            x_obl = asy.fraction_group_oblivious(p, a1)
            lo_, hi_ = sorted((x_obl, a1))
            sandwich.append(max(0.0, lo_ - x_A, x_A - hi_))
    out.append(_max_check("gamma-rule feasibility", fair, 1e-12))
    out.append(_max_check("gamma-rule lies between oblivious and parity", sandwich, 1e-12))
    mu, s = p.dist.mu, p.dist.sigma
    sA, sB = p.noise.sigma_A, p.noise.sigma_B
    ratios = []
    for a1 in (0.15, 0.8):
        th = run_algorithm(BayesianOptimal(), p, Budgets(a1)).thresholds
        got = (th.theta_hat_A - mu) / (th.theta_hat_B - mu)
        ratios.append(got / ((sA**2 + s**2) / (sB**2 + s**2)) - 1.0)
    out.append(_max_check("optimal-threshold ratio", ratios, 1e-6, "relative"))
    dp = []
    for a1 in (0.15, 0.3, 0.7):
        th = run_algorithm(DemographicParity(), p, Budgets(a1)).thresholds
        dp.append((th.theta_hat_A - mu) / (th.theta_hat_B - mu) - math.hypot(sA, s) / math.hypot(sB, s))
    out.append(_max_check("parity threshold ratio", dp, 1e-9))
    gaps = []
    for a1 in (0.15, 0.35, 0.6, 0.8):
        for a2 in (None, 0.1):
            b = Budgets(a1, a2)
            best = run_algorithm(BayesianOptimal(), p, b).utility
            gaps.append(min(best - run_algorithm(s_, p, b).utility for s_ in ALGORITHMS[:3]))
    out.append(_margin_check("optimal utility dominates", gaps, -1e-10))
    normal = gradient_cases()["normal"]
    _, an_auto, _, _ = gradient_errors(normal[0], normal[1][1], "auto", points=6)
    xs = gradient_grid(normal[0], normal[1][1], 6)
    an_quad = np.array([asy.dQ_dxA(x, normal[0], normal[1][1], "quad") for x in xs])
    out.append(_max_check("closed-form and quadrature derivatives agree", an_auto - an_quad, 1e-6))
    out += gradient_checks()
    return out


# --------------------------------------------------------------------------
# theorems


def oblivious_ordering_checks(params=DEFAULT_PARAMS):
    margins, equal = [], []
    for a1 in (0.1, 0.3, 0.45, 0.55, 0.7, 0.9):
        x_A = asy.fraction_group_oblivious(params, a1)
        x_B = (a1 - params.p_A * x_A) / params.p_B
        margins.append((x_A - x_B) * (1 if a1 < 0.5 else -1))
    x_A = asy.fraction_group_oblivious(params, 0.5)
    equal.append(x_A - 0.5)
    equal.append((0.5 - params.p_A * x_A) / params.p_B - 0.5)
    return [
        _margin_check("oblivious: x_A > x_B iff alpha1 < 1/2", margins, 0.0),
        _max_check("oblivious: x_A = x_B = 1/2 at alpha1 = 1/2", equal, 1e-8),
    ]


def optimal_ordering_checks(params=DEFAULT_PARAMS):
    out = []
    margins = []
    for a1, sign in ((0.15, 1), (0.8, -1)):
        o = run_algorithm(BayesianOptimal(), params, Budgets(a1))
        margins.append(sign * (o.x_B - o.x_A))
    out.append(_margin_check("optimal: x_A < x_B at 0.15, reversed at 0.8", margins, 0.0))
    return out


def one_stage_ordering_checks(params=DEFAULT_PARAMS):
    dp_fair, fair_obl, equal = [], [], []
    for a1 in (0.15, 0.35, 0.6, 0.8):
        b = Budgets(a1)
        q = {s.name: run_algorithm(s, params, b).utility for s in ALGORITHMS[:3]}
        dp_fair.append(q["dp"] - q["gamma=0.8"])
        fair_obl.append(q["gamma=0.8"] - q["oblivious"])
    b = Budgets(0.5)
    q = [run_algorithm(s, params, b).utility for s in ALGORITHMS[:3]]
    equal.append(max(q) - min(q))
    return [
        _margin_check("one-stage: Q_dp - Q_fair > 1e-6", dp_fair, 1e-6),
        _margin_check("one-stage: Q_fair - Q_obl >= 0", fair_obl, -1e-12),
        _max_check("one-stage: equal utilities at alpha1 = 1/2", equal, 1e-8),
    ]


def dp_gap_curve(params, alpha2, alphas):
    out = []
    for a1 in alphas:
        b = Budgets(a1, alpha2)
        q_obl = run_algorithm(GroupOblivious(), params, b).utility
        q_dp = run_algorithm(DemographicParity(), params, b).utility
        out.append(asy.performance_gap(q_dp, q_obl))
    return np.array(out)


def two_stage_gap_checks(params=DEFAULT_PARAMS, alpha2=0.1):
    pos = dp_gap_curve(params, alpha2, (0.12, 0.15, 0.55, 0.7, 0.9))
    b = Budgets(0.5, alpha2)
    at_half = run_algorithm(DemographicParity(), params, b).utility - run_algorithm(GroupOblivious(), params, b).utility
    grid = np.linspace(0.1, 1.0, 91)
    curve = dp_gap_curve(params, alpha2, grid)
    return [
        _margin_check("two-stage: Q_dp > Q_obl at 0.12, 0.15, 0.55, 0.7, 0.9", pos, 0.0, "relative gap"),
        _max_check("two-stage: equal utilities at alpha1 = 1/2", [at_half], 1e-8),
        _margin_check("two-stage: dp gap never below -2%", curve + 0.02, 0.0,
                      f"minimum gap {curve.min():.4%} at alpha1={grid[curve.argmin()]:.2f}"),
    ]


def theorem_checks():
    return oblivious_ordering_checks() + optimal_ordering_checks() + one_stage_ordering_checks() + two_stage_gap_checks()


# --------------------------------------------------------------------------
# montecarlo


def oblivious_fraction_errors(params=DEFAULT_PARAMS, alpha1=0.3, sizes=(20, 100, 1000), replications=1000, seed=11):
    """Mean realised x_A of the oblivious rule against its large-n limit, per size.

    Also returns the binomial standard error ``sqrt(x(1-x)/(n_A K))`` of the
    averaged x_A at the largest size.
    """
    target = asy.fraction_group_oblivious(params, alpha1)
    errs = []
    for n in sizes:
        cfg = SimConfig(n, params, Budgets(alpha1), GroupOblivious(), replications, seed)
        errs.append(abs(run_replications(cfg).mean_xA - target))
    n_A = math.floor(params.p_A * sizes[-1])
    return np.array(errs), math.sqrt(target * (1 - target) / (n_A * replications))


def montecarlo_checks():
    out = []
    p = DEFAULT_PARAMS
    cfg = SimConfig(100, p, Budgets(0.3, 0.1), DemographicParity(), 200, seed=5)
    a, b = run_replications(cfg), run_replications(cfg)
    same = np.array_equal(a.utilities, b.utilities)
    out.append(Check("determinism under a fixed seed", same, float(not same), 0.0))
    pop = sample_population(10, p, seed=0)
    sel = select_first_stage(pop, DemographicParity(), 5)
    n_sel_A = int(np.sum(pop.group[sel] == GROUP_A))
    out.append(Check("parity quotas n_A=4, n_B=6, m1=5 give 2 A + 3 B", n_sel_A == 2, n_sel_A, 2))
    worst = 0.0
    for g in (0.5, 0.8, 1.0):
        data, _ = simulate(SimConfig(60, p, Budgets(0.3), GammaRule(g), 100, seed=3), [GammaRule(g)],
                           m1_values=(6, 18, 30, 45))
        n_A = math.floor(p.p_A * 60)
        n_B = 60 - n_A
        sel_A = np.rint(data[..., 1] * n_A)
        sel_B = np.rint(data[..., 2] * n_B)
        # each group within one candidate of its smallest gamma-feasible count
        m1 = sel_A + sel_B
        need_A = g * m1 * n_A / (n_B + g * n_A)
        need_B = g * m1 * n_B / (n_A + g * n_B)
        viol = np.maximum(need_A - 1 - sel_A, need_B - 1 - sel_B)
        worst = max(worst, float(viol.max()))
    out.append(Check("gamma-rule realised rates", worst <= 1e-9, worst, 1e-9,
                     "largest shortfall in candidates beyond the one-candidate slack"))
    errs, se = oblivious_fraction_errors()
    decreasing = bool(np.all(np.diff(errs) < 0))
    out.append(Check("x_A error decreases with n", decreasing, float(np.max(np.diff(errs))), 0.0,
                     "largest increase between consecutive sizes"))
    out.append(_max_check("x_A error at n=1000 within 3 binomial std errors", [errs[-1]], 3 * se))
    return out


RUNNERS = {
    "core": core_checks,
    "asymptotic": asymptotic_checks,
    "theorems": theorem_checks,
    "montecarlo": montecarlo_checks,
}


def run_suite(name):
    if name == "all":
        return [c for s in SUITES for c in RUNNERS[s]()]
    if name not in RUNNERS:
        raise KeyError(name)
    return RUNNERS[name]()
