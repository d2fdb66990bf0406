"""Finite-population simulation of the two-stage selection.

Populations are stored column-wise (:class:`Population`); the first
``floor(p_A * n)`` rows are A-candidates. Every replication draws from its own
substream ``SeedSequence(seed, spawn_key=(replication,))`` so results do not
depend on execution order.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotic import (
    AlgorithmSpec,
    BayesianOptimal,
    Budgets,
    DemographicParity,
    GammaRule,
    GroupOblivious,
    ModelParams,
)

GROUP_A, GROUP_B = 0, 1


class ConfigError(ValueError):
    pass


class QuotaOverflowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Candidate:
    group: str
    w: float
    w_hat: float
    index: int


@dataclass(frozen=True)
class Population:
    group: np.ndarray  # GROUP_A / GROUP_B codes
    w: np.ndarray
    w_hat: np.ndarray

    def __len__(self):
        return self.w.size

    @property
    def index(self):
        return np.arange(self.w.size)

    def candidates(self):
        return [Candidate("A" if g == GROUP_A else "B", float(w), float(wh), i)
                for i, (g, w, wh) in enumerate(zip(self.group, self.w, self.w_hat))]


def substream(seed, key):
    """Generator for one replication; ``key`` is an int or a tuple of ints."""
    key = tuple(key) if isinstance(key, tuple) else (key,)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def group_sizes(n, p_A):
    n_A = math.floor(p_A * n)
    return n_A, n - n_A


def sample_population(n, params: ModelParams, seed=None, rng=None) -> Population:
    """Draw ``n`` candidates: exactly ``floor(p_A n)`` of them in group A."""
    if n < 2:
        raise ConfigError("a population needs at least two candidates")
    if rng is None:
        rng = np.random.default_rng(seed)
    n_A, n_B = group_sizes(n, params.p_A)
    group = np.repeat(np.array([GROUP_A, GROUP_B], dtype=np.int8), [n_A, n_B])
    w = params.dist.sample(rng, n)
    eps = rng.standard_normal(n)
    sigma = np.where(group == GROUP_A, params.noise.sigma_A, params.noise.sigma_B)
    return Population(group, w, w + sigma * eps)


def _rank(values, index):
    """Indices sorted by descending value, ties by ascending index."""
    return index[np.lexsort((index, -values[index]))]


def gamma_quotas(m1, n_A, n_B, gamma):
    """Per-group minimum counts of the gamma-rule before the greedy fill."""
    if gamma == 0:
        return 0, 0
    q_A = math.ceil(m1 * gamma * n_A / (n_B + gamma * n_A) - 1e-9)
    q_B = math.ceil(m1 * gamma * n_B / (n_A + gamma * n_B) - 1e-9)
    if q_A + q_B > m1:
        # both ceilings cannot fit: keep the floors and let the fill settle the rest
        q_A = math.floor(m1 * gamma * n_A / (n_B + gamma * n_A) + 1e-9)
        q_B = math.floor(m1 * gamma * n_B / (n_A + gamma * n_B) + 1e-9)
    return q_A, q_B


def _as_gamma(spec):
    if isinstance(spec, GroupOblivious):
        return 0.0
    if isinstance(spec, DemographicParity):
        return 1.0
    if isinstance(spec, GammaRule):
        return spec.gamma
    if isinstance(spec, BayesianOptimal):
        raise ConfigError("the Bayesian-optimal rule has no finite-n quota implementation")
    raise TypeError(f"not an algorithm: {spec!r}")


class RankedPopulation:
    """A population with its orderings precomputed, so repeated selections are O(n)."""

    def __init__(self, pop: Population):
        self.pop = pop
        idx = pop.index
        self.in_A = pop.group == GROUP_A
        self.n_A = int(self.in_A.sum())
        self.n_B = len(pop) - self.n_A
        self.by_estimate = _rank(pop.w_hat, idx)
        self.by_quality = _rank(pop.w, idx)
        # rank of each candidate within its own group by estimate
        self.group_rank = np.empty(len(pop), dtype=np.int64)
        in_A_sorted = self.in_A[self.by_estimate]
        self.group_rank[self.by_estimate] = np.where(
            in_A_sorted, np.cumsum(in_A_sorted) - 1, np.cumsum(~in_A_sorted) - 1)

    def first_stage_mask(self, spec, m1):
        n = len(self.pop)
        if not 0 <= m1 <= n:
            raise ConfigError(f"m1={m1} must lie in [0, {n}]")
        q_A, q_B = gamma_quotas(m1, self.n_A, self.n_B, _as_gamma(spec))
        overflow = q_A > self.n_A or q_B > self.n_B
        q_A, q_B = min(q_A, self.n_A), min(q_B, self.n_B)
        quota = np.where(self.in_A, q_A, q_B)
        mask = self.group_rank < quota
        rest = self.by_estimate[~mask[self.by_estimate]]
        mask[rest[: m1 - q_A - q_B]] = True
        return mask, overflow

    def second_stage(self, mask, m2):
        k = int(mask.sum())
        if not 0 <= m2 <= k:
            raise ConfigError(f"m2={m2} must lie in [0, {k}]")
        return self.by_quality[mask[self.by_quality]][:m2]


def select_first_stage(pop: Population, spec: AlgorithmSpec, m1, return_flag=False):
    """Indices of the ``m1`` candidates kept at the first stage.

    Quotas of the gamma-rule are filled with the best estimates of each group,
    then the remaining places go to the best remaining estimates. A quota
    larger than its group is capped (and flagged).
    """
    mask, overflow = RankedPopulation(pop).first_stage_mask(spec, m1)
    if overflow:
        warnings.warn("gamma-rule quota exceeds group size; capped", QuotaOverflowWarning, stacklevel=2)
    out = np.flatnonzero(mask)
    return (out, overflow) if return_flag else out


def select_second_stage(pop: Population, selected, m2):
    """The ``m2`` selected candidates with the largest true quality."""
    selected = np.asarray(selected, dtype=np.int64)
    if not 0 <= m2 <= selected.size:
        raise ConfigError(f"m2={m2} must lie in [0, {selected.size}]")
    return np.sort(_rank(pop.w, selected)[:m2])


def evaluate_population(pop: Population, specs, cells):
    """Final mean quality and realised first-stage fractions for each (m1, m2) cell.

    Returns an array of shape ``(len(cells), len(specs), 3)`` and the quota
    overflow flag.
    """
    ranked = RankedPopulation(pop)
    rows = np.empty((len(cells), len(specs), 3))
    flag = False
    for i, (m1, m2) in enumerate(cells):
        for j, spec in enumerate(specs):
            mask, over = ranked.first_stage_mask(spec, m1)
            flag |= over
            final = ranked.second_stage(mask, m2)
            sel_A = int(np.count_nonzero(mask & ranked.in_A))
            rows[i, j] = (pop.w[final].mean(), sel_A / ranked.n_A, (m1 - sel_A) / ranked.n_B)
    return rows, flag


@dataclass(frozen=True)
class SimConfig:
    n: int
    params: ModelParams
    budgets: Budgets
    spec: AlgorithmSpec = field(default_factory=GroupOblivious)
    replications: int = 1000
    seed: int = 0
    m1: int | None = None
    m2: int | None = None

    def counts(self):
        """``(m1, m2, n_A)``; explicit counts override the budget fractions.

        With one-stage budgets and no explicit ``m2`` the final count is ``m1``.
        """
        m1 = self.m1 if self.m1 is not None else math.floor(self.budgets.alpha1 * self.n)
        if self.m2 is not None:
            m2 = self.m2
        elif self.budgets.one_stage:
            m2 = m1
        else:
            m2 = math.floor(self.budgets.alpha2 * self.n)
        return m1, m2, math.floor(self.params.p_A * self.n)

    def validate(self):
        m1, m2, n_A = self.counts()
        problems = []
        if self.replications < 1:
            problems.append("replications must be >= 1")
        if not 1 <= m2 <= m1 <= self.n:
            problems.append(f"need 1 <= m2 <= m1 <= n, got m2={m2}, m1={m1}, n={self.n}")
        if not (n_A >= 1 and self.n - n_A >= 1):
            problems.append(f"both groups must be nonempty (n_A={n_A}, n={self.n})")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class SimResult:
    mean_utility: float
    std_error: float
    mean_xA: float
    mean_xB: float
    utilities: np.ndarray
    overflow: bool = False


def _summarise(utils, xa, xb, overflow=False):
    utils = np.asarray(utils, dtype=float)
    k = utils.size
    se = float(np.std(utils, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return SimResult(float(np.mean(utils)), se, float(np.mean(xa)), float(np.mean(xb)), utils, overflow)


def simulate(config: SimConfig, specs, m1_values=None, threads=1):
    """Run every algorithm in ``specs`` for every ``m1`` on shared populations.

    With one-stage budgets the final count follows ``m1``. Returns an array of
    shape ``(K, len(m1_values), len(specs), 3)`` holding the final mean
    quality and the realised first-stage fractions of A and B, and a flag
    telling whether any gamma-rule quota had to be capped.
    """
    config.validate()
    m1, m2, _ = config.counts()
    m1s = [m1] if m1_values is None else [int(v) for v in m1_values]
    follow = config.budgets.one_stage and config.m2 is None
    cells = [(v, v if follow else m2) for v in m1s]
    for a, b in cells:
        if not 1 <= b <= a <= config.n:
            raise ConfigError(f"need 1 <= m2 <= m1 <= n, got m2={b}, m1={a}, n={config.n}")

    def work(r):
        pop = sample_population(config.n, config.params, rng=substream(config.seed, r))
        return evaluate_population(pop, specs, cells)

    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, reps))
    else:
        results = [work(r) for r in reps]
    return np.stack([res for res, _ in results]), any(f for _, f in results)


def run_replications(config: SimConfig, threads=1) -> SimResult:
    data, flag = simulate(config, [config.spec], threads=threads)
    d = data[:, 0, 0, :]
    return _summarise(d[:, 0], d[:, 1], d[:, 2], flag)


@dataclass(frozen=True)
class PairedResult:
    """Per-algorithm results on common populations, plus the relative-gain statistics."""

    results: dict
    mean_gap: float  # <(Q_alg - Q_ref) / Q_ref>, paired per population
    gap_std_error: float
    gap_of_means: float  # (<Q_alg> - <Q_ref>) / <Q_ref>


def compare(config: SimConfig, specs, reference=GroupOblivious(), m1_values=None, threads=1):
    """Every algorithm of ``specs`` against ``reference`` on identical populations.

    Returns, for each ``m1``, a dict from algorithm name to :class:`PairedResult`
    whose ``results`` hold the reference and that algorithm.
    """
    specs = [s for s in specs if s != reference]
    data, flag = simulate(config, [reference, *specs], m1_values, threads)
    out = []
    for i in range(data.shape[1]):
        ref = data[:, i, 0, :]
        ref_res = _summarise(ref[:, 0], ref[:, 1], ref[:, 2], flag)
        row = {reference.name: PairedResult({reference.name: ref_res}, 0.0, 0.0, 0.0)}
        for j, spec in enumerate(specs, start=1):
            alt = data[:, i, j, :]
            gaps = (alt[:, 0] - ref[:, 0]) / ref[:, 0]
            k = gaps.size
            alt_res = _summarise(alt[:, 0], alt[:, 1], alt[:, 2], flag)
            row[spec.name] = PairedResult(
                {reference.name: ref_res, spec.name: alt_res},
                float(gaps.mean()),
                float(np.std(gaps, ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
                (alt_res.mean_utility - ref_res.mean_utility) / ref_res.mean_utility,
            )
        out.append(row)
    return out


def run_paired(config: SimConfig, spec, reference=GroupOblivious(), m1_values=None, threads=1):
    """Compare ``spec`` with ``reference`` on identical populations, for each ``m1``."""
    return [row[spec.name] for row in compare(config, [spec], reference, m1_values, threads)]
