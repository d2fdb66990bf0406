"""The large-population selection model.

A threshold-type selection passes a ``G`` candidate at the first stage when
``W_hat >= theta_hat_G`` and at the second stage when additionally
``W >= theta``. Fixing the first-stage budget, the whole policy is described
by the fraction ``x_A`` of A-candidates kept at the first stage, and the
utility ``Q(x_A)`` is the expected true quality of a finally selected
candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .core import (
    NO_CUT,
    DomainError,
    GroupNoise,
    Normal,
    QualityDistribution,
    conditional_excess,
    conditional_mean,
    joint_tail,
    tail_quality_mass,
)

# x_G = 0 is represented by the estimate quantile at 1 - EMPTY_TAIL plus a flag
EMPTY_TAIL = 1e-12
PROB_TOL = 1e-10
_RTOL = 4 * np.finfo(float).eps


class InfeasibleBudget(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    p_A: float
    dist: QualityDistribution = field(default_factory=Normal)
    noise: GroupNoise = field(default_factory=lambda: GroupNoise(1.0, 0.0))

    def __post_init__(self):
        if not 0.0 < self.p_A < 1.0:
            raise ValueError(f"p_A must lie in (0, 1), got {self.p_A}")

    @property
    def p_B(self):
        return 1.0 - self.p_A

    def p(self, group):
        return self.p_A if group == "A" else self.p_B

    def sigma(self, group):
        return self.noise.of(group)


@dataclass(frozen=True)
class Budgets:
    alpha1: float
    alpha2: float | None = None

    def __post_init__(self):
        if self.alpha2 is None:
            object.__setattr__(self, "alpha2", self.alpha1)
        if not 0.0 < self.alpha2 <= self.alpha1 <= 1.0:
            raise ValueError(f"need 0 < alpha2 <= alpha1 <= 1, got {self.alpha1}, {self.alpha2}")

    @property
    def one_stage(self):
        return self.alpha2 == self.alpha1


@dataclass(frozen=True)
class Thresholds:
    theta_hat_A: float
    theta_hat_B: float
    theta: float = NO_CUT
    empty_A: bool = False
    empty_B: bool = False

    def of(self, group):
        return self.theta_hat_A if group == "A" else self.theta_hat_B

    def empty(self, group):
        return self.empty_A if group == "A" else self.empty_B


# algorithms -------------------------------------------------------------


@dataclass(frozen=True)
class GroupOblivious:
    name = "oblivious"


@dataclass(frozen=True)
class GammaRule:
    gamma: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def name(self):
        return f"gamma={self.gamma:g}"


@dataclass(frozen=True)
class DemographicParity:
    name = "dp"


@dataclass(frozen=True)
class BayesianOptimal:
    name = "optimal"


AlgorithmSpec = GroupOblivious | GammaRule | DemographicParity | BayesianOptimal


def parse_algorithm(text: str) -> AlgorithmSpec:
    """``oblivious``, ``dp``, ``optimal`` or ``gamma=<value>``."""
    t = text.strip().lower()
    if t in ("oblivious", "obl", "group-oblivious"):
        return GroupOblivious()
    if t in ("dp", "demographic-parity"):
        return DemographicParity()
    if t in ("optimal", "opt", "bayesian-optimal"):
        return BayesianOptimal()
    if t.startswith("gamma="):
        return GammaRule(float(t.split("=", 1)[1]))
    raise ValueError(f"unknown algorithm {text!r}")


@dataclass(frozen=True)
class SelectionOutcome:
    x_A: float
    x_B: float
    y_A: float
    y_B: float
    thresholds: Thresholds
    utility: float


# threshold solvers ------------------------------------------------------


def estimate_sf(theta_hat, group, params: ModelParams):
    """Fraction of ``group`` whose estimate is at least ``theta_hat``."""
    return joint_tail(theta_hat, NO_CUT, params.sigma(group), params.dist)


def _estimate_quantile_bracket(sigma_G, dist):
    lo, hi = dist.effective_support()
    return lo - 40.0 * sigma_G, hi + 40.0 * sigma_G


def threshold_for_fraction(x, sigma_G, dist: QualityDistribution):
    """Threshold on the estimate keeping a fraction ``x`` of a group.

    Returns ``(theta_hat, empty)``; ``x == 1`` gives ``-inf`` and ``x == 0``
    gives the ``1 - 1e-12`` quantile with ``empty`` set.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"selection fraction must lie in [0, 1], got {x}")
    if x >= 1.0:
        return -math.inf, False
    empty = x <= 0.0
    target = EMPTY_TAIL if empty else x
    if isinstance(dist, Normal):
        s = math.hypot(dist.sigma, sigma_G)
        return dist.mu - s * float(special.ndtri(target)), empty
    if sigma_G == 0:
        return float(dist.isf(target)), empty
    lo, hi = _estimate_quantile_bracket(sigma_G, dist)
    f = lambda t: joint_tail(t, NO_CUT, sigma_G, dist) - target
    while f(lo) < 0:
        lo -= 10.0 * (sigma_G + 1.0)
    while f(hi) > 0:
        hi += 10.0 * (sigma_G + 1.0)
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=_RTOL, maxiter=200), empty


def feasible_xA_interval(params: ModelParams, alpha1):
    lo = max(0.0, (alpha1 - params.p_B) / params.p_A)
    hi = min(1.0, alpha1 / params.p_A)
    return lo, hi


def _other_fraction(x_A, params, alpha1):
    x_B = (alpha1 - params.p_A * x_A) / params.p_B
    return min(max(x_B, 0.0), 1.0)


def solve_first_stage_thresholds(x_A, params: ModelParams, alpha1) -> Thresholds:
    lo, hi = feasible_xA_interval(params, alpha1)
    if not lo - 1e-12 <= x_A <= hi + 1e-12:
        raise DomainError(f"x_A={x_A} outside the feasible interval [{lo}, {hi}]")
    x_A = min(max(x_A, lo), hi)
    x_B = _other_fraction(x_A, params, alpha1)
    tA, eA = threshold_for_fraction(x_A, params.noise.sigma_A, params.dist)
    tB, eB = threshold_for_fraction(x_B, params.noise.sigma_B, params.dist)
    return Thresholds(tA, tB, NO_CUT, eA, eB)


def _joint(th: Thresholds, group, theta, params, method="auto"):
    if th.empty(group):
        return 0.0
    return joint_tail(th.of(group), theta, params.sigma(group), params.dist, method)


def _mass(th: Thresholds, group, theta, params, method="auto"):
    if th.empty(group):
        return 0.0
    return tail_quality_mass(th.of(group), theta, params.sigma(group), params.dist, method)


def second_stage_mass(th: Thresholds, theta, params: ModelParams, method="auto"):
    return sum(params.p(g) * _joint(th, g, theta, params, method) for g in "AB")


def solve_second_stage_threshold(th: Thresholds, params: ModelParams, budgets: Budgets, method="auto"):
    """Quality cut ``theta`` such that a fraction ``alpha2`` passes both stages."""
    if budgets.one_stage:
        return NO_CUT
    first = second_stage_mass(th, NO_CUT, params, method)
    alpha2 = budgets.alpha2
    if alpha2 > first + 1e-12:
        raise InfeasibleBudget(f"alpha2={alpha2} exceeds the first-stage mass {first}")
    dist = params.dist
    f = lambda t: second_stage_mass(th, t, params, method) - alpha2
    lo, top = dist.effective_support()
    if f(lo) <= 0:
        return NO_CUT
    # f(isf(alpha2)) <= 0 up to rounding; walk right until the sign is certain
    hi = float(dist.isf(alpha2))
    step = 1e-9 * max(1.0, abs(hi))
    while f(hi) > 0 and hi < top:
        hi = min(hi + step, top)
        step *= 4.0
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=_RTOL, maxiter=200)


def utility_Q(x_A, params: ModelParams, budgets: Budgets, method="auto") -> SelectionOutcome:
    """Expected quality of a final selection keeping a fraction ``x_A`` of A.

    ``method="quad"`` evaluates every tail integral by quadrature even when a
    closed form exists.
    """
    th = solve_first_stage_thresholds(x_A, params, budgets.alpha1)
    theta = solve_second_stage_threshold(th, params, budgets, method)
    th = Thresholds(th.theta_hat_A, th.theta_hat_B, theta, th.empty_A, th.empty_B)
    x = {g: 0.0 if th.empty(g) else _joint(th, g, NO_CUT, params, method) for g in "AB"}
    if theta == NO_CUT:
        y = dict(x)
        mass_total = budgets.alpha1
    else:
        y = {g: _joint(th, g, theta, params, method) for g in "AB"}
        mass_total = budgets.alpha2
    numer = sum(params.p(g) * _mass(th, g, theta, params, method) for g in "AB")
    return SelectionOutcome(float(x["A"]), float(x["B"]), float(y["A"]), float(y["B"]), th,
                            float(numer / mass_total))


# first-stage fractions of the algorithms --------------------------------


def fraction_group_oblivious(params: ModelParams, alpha1):
    """A-fraction when one common threshold is applied to every estimate."""
    if alpha1 >= 1.0:
        return 1.0
    lo = min(_estimate_quantile_bracket(params.sigma(g), params.dist)[0] for g in "AB")
    hi = max(_estimate_quantile_bracket(params.sigma(g), params.dist)[1] for g in "AB")
    f = lambda t: sum(params.p(g) * estimate_sf(t, g, params) for g in "AB") - alpha1
    t = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=_RTOL, maxiter=200)
    return estimate_sf(t, "A", params)


def fraction_gamma_rule(params: ModelParams, alpha1, gamma, x_oblivious=None):
    """Oblivious fraction clamped into the region allowed by the gamma-rule."""
    x_obl = fraction_group_oblivious(params, alpha1) if x_oblivious is None else x_oblivious
    p_A, p_B = params.p_A, params.p_B
    upper = alpha1 / (p_A + p_B * gamma)
    lower = 0.0 if gamma == 0 else alpha1 / (p_A + p_B / gamma)
    return min(upper, max(x_obl, lower))


def fraction_demographic_parity(alpha1):
    return alpha1


def dQ_dxA_one_stage(x_A, params: ModelParams, alpha1, method="auto"):
    """Derivative of the one-stage utility with respect to ``x_A``."""
    lo, hi = feasible_xA_interval(params, alpha1)
    if not lo < x_A < hi:
        raise DomainError(f"derivative needs x_A strictly inside ({lo}, {hi}), got {x_A}")
    th = solve_first_stage_thresholds(x_A, params, alpha1)
    d = params.dist
    mA = conditional_mean(th.theta_hat_A, params.noise.sigma_A, d, method)
    mB = conditional_mean(th.theta_hat_B, params.noise.sigma_B, d, method)
    return params.p_A / alpha1 * (mA - mB)


def dQ_dxA_two_stage(x_A, params: ModelParams, budgets: Budgets, method="auto"):
    """Derivative of the two-stage utility with respect to ``x_A``."""
    if budgets.one_stage:
        return dQ_dxA_one_stage(x_A, params, budgets.alpha1, method)
    lo, hi = feasible_xA_interval(params, budgets.alpha1)
    if not lo < x_A < hi:
        raise DomainError(f"derivative needs x_A strictly inside ({lo}, {hi}), got {x_A}")
    th = solve_first_stage_thresholds(x_A, params, budgets.alpha1)
    theta = solve_second_stage_threshold(th, params, budgets)
    if theta == NO_CUT:
        # the second stage keeps everyone, so the utility is the one-stage one
        return dQ_dxA_one_stage(x_A, params, budgets.alpha1, method)
    d = params.dist
    eA = conditional_excess(th.theta_hat_A, theta, params.noise.sigma_A, d, method)
    eB = conditional_excess(th.theta_hat_B, theta, params.noise.sigma_B, d, method)
    return params.p_A / budgets.alpha2 * (eA - eB)


def dQ_dxA(x_A, params: ModelParams, budgets: Budgets, method="auto"):
    if budgets.one_stage:
        return dQ_dxA_one_stage(x_A, params, budgets.alpha1, method)
    return dQ_dxA_two_stage(x_A, params, budgets, method)


def fraction_bayesian_optimal(params: ModelParams, budgets: Budgets, method="auto"):
    """Maximiser of the concave utility, found as the root of its derivative."""
    lo, hi = feasible_xA_interval(params, budgets.alpha1)
    if hi - lo <= 1e-12:
        return lo
    eps = 1e-9 * (hi - lo)
    g = lambda x: dQ_dxA(x, params, budgets, method)
    g_lo, g_hi = g(lo + eps), g(hi - eps)
    if g_lo <= 0:
        return lo
    if g_hi >= 0:
        return hi
    return optimize.brentq(g, lo + eps, hi - eps, xtol=1e-12, rtol=_RTOL, maxiter=200)


def fraction(spec: AlgorithmSpec, params: ModelParams, budgets: Budgets):
    if isinstance(spec, GroupOblivious):
        return fraction_group_oblivious(params, budgets.alpha1)
    if isinstance(spec, GammaRule):
        return fraction_gamma_rule(params, budgets.alpha1, spec.gamma)
    if isinstance(spec, DemographicParity):
        return fraction_demographic_parity(budgets.alpha1)
    if isinstance(spec, BayesianOptimal):
        return fraction_bayesian_optimal(params, budgets)
    raise TypeError(f"not an algorithm: {spec!r}")


def run_algorithm(spec: AlgorithmSpec, params: ModelParams, budgets: Budgets) -> SelectionOutcome:
    return utility_Q(fraction(spec, params, budgets), params, budgets)


def performance_gap(q, q_reference):
    return (q - q_reference) / q_reference


def sign_change_intervals(alphas, gaps, tol=1e-9):
    """Grid intervals over which ``gaps`` changes sign.

    Points with ``|gap| <= tol`` count as ties and are skipped, so an interval
    may span several grid steps.
    """
    pts = [(a, g) for a, g in zip(alphas, gaps) if abs(g) > tol]
    return [(a0, a1) for (a0, g0), (a1, g1) in zip(pts, pts[1:]) if (g0 > 0) != (g1 > 0)]
