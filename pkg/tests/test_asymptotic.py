import json
import math
from pathlib import Path

import numpy as np
import pytest

from implicit_variance import asymptotic as asy
from implicit_variance.asymptotic import (
    BayesianOptimal,
    Budgets,
    DemographicParity,
    GammaRule,
    GroupOblivious,
    InfeasibleBudget,
    ModelParams,
    parse_algorithm,
    performance_gap,
    run_algorithm,
    sign_change_intervals,
    utility_Q,
)
from implicit_variance.core import DomainError, GaussianMixture, GroupNoise, Normal, Pareto, Uniform

FIXTURES = Path(__file__).parent / "fixtures"
P = ModelParams(0.4, Normal(1.0, 1.0), GroupNoise(3.0, 0.2))
ALGS = (GroupOblivious(), GammaRule(0.8), DemographicParity(), BayesianOptimal())


def test_parse_algorithm_names():
    assert parse_algorithm("oblivious") == GroupOblivious()
    assert parse_algorithm("dp") == DemographicParity()
    assert parse_algorithm("optimal") == BayesianOptimal()
    assert parse_algorithm("gamma=0.8") == GammaRule(0.8)
    with pytest.raises(ValueError):
        parse_algorithm("quota")


def test_budget_validation():
    with pytest.raises(ValueError):
        Budgets(0.1, 0.2)
    with pytest.raises(ValueError):
        Budgets(0.0)
    with pytest.raises(ValueError):
        ModelParams(1.0, Normal(0, 1), GroupNoise(1, 1))
    assert Budgets(0.3).one_stage and not Budgets(0.3, 0.1).one_stage


@pytest.mark.parametrize("a1", [0.15, 0.35, 0.6, 0.8])
@pytest.mark.parametrize("a2", [None, 0.1])
def test_budgets_are_spent_exactly(a1, a2):
    b = Budgets(a1, a2)
    for spec in ALGS:
        o = run_algorithm(spec, P, b)
        assert P.p_A * o.x_A + P.p_B * o.x_B == pytest.approx(a1, abs=1e-9)
        assert P.p_A * o.y_A + P.p_B * o.y_B == pytest.approx(b.alpha2, abs=1e-9)
        assert 0 <= o.y_A <= o.x_A + 1e-12 and 0 <= o.y_B <= o.x_B + 1e-12


@pytest.mark.parametrize("gamma", [0.0, 0.2, 0.8, 1.0])
@pytest.mark.parametrize("a1", [0.05, 0.3, 0.5, 0.7, 0.95])
def test_gamma_rule_feasible_and_between_oblivious_and_parity(gamma, a1):
    x_A = asy.fraction_gamma_rule(P, a1, gamma)
    x_B = (a1 - P.p_A * x_A) / P.p_B
    assert x_A >= gamma * x_B - 1e-12 and x_B >= gamma * x_A - 1e-12
    lo, hi = sorted((asy.fraction_group_oblivious(P, a1), a1))
    assert lo - 1e-12 <= x_A <= hi + 1e-12
    if gamma == 1.0:
        assert x_A == pytest.approx(a1, abs=1e-12)


def test_gamma_zero_is_oblivious():
    for a1 in (0.1, 0.6):
        assert asy.fraction_gamma_rule(P, a1, 0.0) == asy.fraction_group_oblivious(P, a1)


@pytest.mark.parametrize("a1", [0.15, 0.8])
def test_optimal_threshold_ratio(a1):
    th = run_algorithm(BayesianOptimal(), P, Budgets(a1)).thresholds
    got = (th.theta_hat_A - 1.0) / (th.theta_hat_B - 1.0)
    np.testing.assert_allclose(got, (9 + 1) / (0.04 + 1), rtol=1e-6)


@pytest.mark.parametrize("a1", [0.15, 0.3, 0.7])
def test_parity_threshold_ratio(a1):
    th = run_algorithm(DemographicParity(), P, Budgets(a1)).thresholds
    got = (th.theta_hat_A - 1.0) / (th.theta_hat_B - 1.0)
    np.testing.assert_allclose(got, math.hypot(3, 1) / math.hypot(0.2, 1), rtol=1e-9)


def test_oblivious_threshold_is_common():
    th = run_algorithm(GroupOblivious(), P, Budgets(0.3)).thresholds
    assert th.theta_hat_A == pytest.approx(th.theta_hat_B, abs=1e-9)


@pytest.mark.parametrize("a1", [0.15, 0.35, 0.6, 0.8])
@pytest.mark.parametrize("a2", [None, 0.1])
def test_optimal_dominates_every_algorithm(a1, a2):
    b = Budgets(a1, a2)
    best = run_algorithm(BayesianOptimal(), P, b).utility
    for spec in ALGS[:3]:
        assert best >= run_algorithm(spec, P, b).utility - 1e-10
    # a brute-force scan never beats the root of the derivative
    lo, hi = asy.feasible_xA_interval(P, a1)
    scan = max(utility_Q(x, P, b).utility for x in np.linspace(lo, hi, 41))
    assert best >= scan - 1e-10


def test_one_stage_reference_values():
    b = Budgets(0.15)
    q = {s.name: run_algorithm(s, P, b).utility for s in ALGS}
    np.testing.assert_allclose(
        [q["oblivious"], q["gamma=0.8"], q["dp"], q["optimal"]],
        [1.70243, 2.07125, 2.11114, 2.25129], atol=5e-6)


def test_all_algorithms_agree_at_half():
    for a2 in (None, 0.1):
        qs = [run_algorithm(s, P, Budgets(0.5, a2)).utility for s in ALGS[:3]]
        assert max(qs) - min(qs) < 1e-8


def test_full_budget_selects_everyone():
    o = utility_Q(1.0, P, Budgets(1.0))
    assert (o.x_A, o.x_B) == (1.0, 1.0)
    assert o.utility == pytest.approx(1.0, abs=1e-12)


def test_empty_group_is_flagged():
    lo, hi = asy.feasible_xA_interval(P, 0.3)
    th = asy.solve_first_stage_thresholds(lo, P, 0.3)
    assert th.empty_A and not th.empty_B
    o = utility_Q(lo, P, Budgets(0.3, 0.1))
    assert o.x_A == 0.0 and o.y_A == 0.0
    assert np.isfinite(o.utility)


def test_infeasible_x_a_raises():
    with pytest.raises(DomainError):
        utility_Q(0.9, P, Budgets(0.3))


def test_infeasible_second_stage_raises():
    th = asy.solve_first_stage_thresholds(0.3, P, 0.3)
    with pytest.raises(InfeasibleBudget):
        asy.solve_second_stage_threshold(th, P, Budgets(1.0, 0.5))


def test_closed_form_and_quadrature_agree():
    b = Budgets(0.3, 0.1)
    lo, hi = asy.feasible_xA_interval(P, 0.3)
    for x in np.linspace(lo, hi, 8)[1:-1]:
        qa = utility_Q(x, P, b, method="auto").utility
        qq = utility_Q(x, P, b, method="quad").utility
        np.testing.assert_allclose(qa, qq, rtol=1e-8)
        np.testing.assert_allclose(asy.dQ_dxA(x, P, b, "auto"), asy.dQ_dxA(x, P, b, "quad"),
                                   rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("dist", [Normal(0.5, 2.0), Pareto(1.0, 3.0), Uniform(0.0, 1.0),
                                  GaussianMixture(((0.3, 0.0, 1.0), (0.7, 2.0, 0.5)))])
def test_derivative_matches_finite_difference(dist):
    params = ModelParams(0.3, dist, GroupNoise(2.0, 0.5))
    for b in (Budgets(0.3), Budgets(0.3, 0.1)):
        lo, hi = asy.feasible_xA_interval(params, 0.3)
        for x in lo + (hi - lo) * np.array([0.2, 0.5, 0.8]):
            h = 1e-4
            fd = (utility_Q(x + h, params, b, "quad").utility - utility_Q(x - h, params, b, "quad").utility) / (2 * h)
            np.testing.assert_allclose(asy.dQ_dxA(x, params, b), fd, rtol=1e-4, atol=1e-6)


def test_derivative_outside_interval_raises():
    with pytest.raises(DomainError):
        asy.dQ_dxA(0.0, P, Budgets(0.3))


def test_utility_is_concave_along_grid():
    b = Budgets(0.3, 0.1)
    lo, hi = asy.feasible_xA_interval(P, 0.3)
    d = [asy.dQ_dxA(x, P, b) for x in np.linspace(lo, hi, 12)[1:-1]]
    assert np.all(np.diff(d) < 0)


def test_equal_noise_makes_oblivious_optimal():
    params = ModelParams(0.4, Normal(1, 1), GroupNoise(1.0, 1.0))
    b = Budgets(0.2, 0.05)
    q_obl = run_algorithm(GroupOblivious(), params, b).utility
    q_opt = run_algorithm(BayesianOptimal(), params, b).utility
    assert q_opt == pytest.approx(q_obl, rel=1e-9)
    assert asy.fraction_group_oblivious(params, 0.2) == pytest.approx(0.2, abs=1e-12)


def test_label_swap_symmetry():
    a = ModelParams(0.4, Normal(1, 1), GroupNoise(3.0, 0.2))
    b = ModelParams(0.6, Normal(1, 1), GroupNoise(0.2, 3.0))
    for spec in ALGS:
        np.testing.assert_allclose(run_algorithm(spec, a, Budgets(0.3, 0.1)).utility,
                                   run_algorithm(spec, b, Budgets(0.3, 0.1)).utility, rtol=1e-8)


def test_performance_gap_and_sign_changes():
    assert performance_gap(1.1, 1.0) == pytest.approx(0.1)
    assert sign_change_intervals([0.1, 0.2, 0.3, 0.4], [1.0, -1.0, -0.5, 0.2]) == [(0.1, 0.2), (0.3, 0.4)]
    assert sign_change_intervals([0.1, 0.2], [1.0, 2.0]) == []
    # exact ties are skipped rather than counted as a sign
    assert sign_change_intervals([0.4, 0.5, 0.6, 1.0], [-0.1, 0.0, 0.2, 0.0]) == [(0.4, 0.6)]


def _params_from(block):
    p = block["params"]
    if "mu" in p:
        dist = Normal(p["mu"], p["sigma"])
    else:
        dist = Pareto(p["scale"], p["shape"])
    return ModelParams(p["p_A"], dist, GroupNoise(p["sigma_A"], p["sigma_B"])), p.get("alpha2")


@pytest.mark.parametrize("key", ["normal_two_stage", "pareto_one_stage", "pareto_two_stage"])
def test_headline_gap_regression(key):
    block = json.loads((FIXTURES / "headline_gaps.json").read_text())[key]
    params, a2 = _params_from(block)
    got = []
    for a1 in block["alpha1"]:
        b = Budgets(a1, a2)
        got.append(performance_gap(run_algorithm(DemographicParity(), params, b).utility,
                                   run_algorithm(GroupOblivious(), params, b).utility))
    np.testing.assert_allclose(got, block["dp_gap"], rtol=1e-6, atol=1e-9)


def test_small_budget_gap_exceeds_ten_percent():
    # sigma_A / sigma_B = 15 and alpha1 close to alpha2
    for a1 in (0.1, 0.11, 0.12):
        b = Budgets(a1, 0.1)
        gap = performance_gap(run_algorithm(DemographicParity(), P, b).utility,
                              run_algorithm(GroupOblivious(), P, b).utility)
        assert gap > 0.10
