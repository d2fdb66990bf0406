"""Score-file ingestion and noisy-selection experiments on empirical scores."""
from __future__ import annotations

import csv
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotic import AlgorithmSpec, DemographicParity, GroupOblivious
from .montecarlo import GROUP_A, GROUP_B, ConfigError, Population, evaluate_population, substream


class ScoreFileError(ValueError):
    """Malformed or unusable score file."""


@dataclass(frozen=True)
class ScoreRecord:
    group_label: str
    score: float


@dataclass(frozen=True)
class ScoreData:
    records: tuple
    counts: dict

    @property
    def labels(self):
        return tuple(sorted(self.counts))

    def __len__(self):
        return len(self.records)


def load_scores(path, group_column="gender", score_column="score", delimiter=","):
    """Read a delimited file with a header row into :class:`ScoreData`.

    Rows with an empty or non-numeric score, or a missing group label, are
    reported together with their line numbers. More than two groups is an
    error: the model has exactly two.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"score file not found: {path}")
    records, problems = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        missing = [c for c in (group_column, score_column) if c not in header]
        if missing:
            raise ScoreFileError(f"{path}: missing column(s) {missing}; header is {header}")
        for row in reader:
            line = reader.line_num
            label = (row.get(group_column) or "").strip()
            raw = (row.get(score_column) or "").strip()
            if not label:
                problems.append(f"line {line}: empty group label")
                continue
            try:
                score = float(raw)
            except ValueError:
                problems.append(f"line {line}: score {raw!r} is not a number")
                continue
            if not math.isfinite(score):
                problems.append(f"line {line}: score {raw!r} is not finite")
                continue
            records.append(ScoreRecord(label, score))
    if problems:
        shown = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise ScoreFileError(f"{path}: {len(problems)} malformed row(s): {shown}{more}")
    counts = dict(Counter(r.group_label for r in records))
    if len(counts) != 2:
        raise ScoreFileError(f"{path}: expected exactly two groups, found {sorted(counts)}")
    return ScoreData(tuple(records), counts)


def write_scores(path, labels, scores, group_column="gender", score_column="score", delimiter=","):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([group_column, score_column])
        for g, s in zip(labels, scores):
            w.writerow([g, repr(float(s))])


# label: (count, mean, std, tail weight, tail offset, tail scale); sizes are
# the exam data at one tenth scale, offset and scale in bulk-sd units
EXAM_GROUPS = {
    "m": (28694, 30.8, 51.8, 0.25, 2.8, 0.6),
    "w": (9803, 21.2, 39.3, 0.25, 2.6, 0.9),
}


def skewed_shape(rng, size, tail_weight, tail_offset, tail_scale):
    """Standardised draws from a normal bulk mixed with a shifted exponential tail."""
    tail = rng.random(size) < tail_weight
    z = rng.standard_normal(size)
    z[tail] = tail_offset + rng.exponential(tail_scale, int(tail.sum()))
    return (z - z.mean()) / z.std()


def synthetic_exam_scores(seed=0, groups=None):
    """Labels and scores whose per-group mean and std match ``groups`` exactly.

    ``groups`` maps a label to (count, mean, std, tail weight, tail offset,
    tail scale). The first two moments fix location and spread only; the tail
    parameters decide how the groups compare among the top scores.
    """
    groups = EXAM_GROUPS if groups is None else groups
    rng = np.random.default_rng(seed)
    labels, scores = [], []
    for label, (count, mean, std, *tail) in groups.items():
        labels += [label] * count
        scores.append(mean + std * skewed_shape(rng, count, *tail))
    return labels, np.concatenate(scores)


def records_from_arrays(labels, scores) -> ScoreData:
    records = tuple(ScoreRecord(str(g), float(s)) for g, s in zip(labels, scores))
    return ScoreData(records, dict(Counter(r.group_label for r in records)))


@dataclass(frozen=True)
class DatasetExperimentConfig:
    """Noise levels, budgets and replication settings for a score-file experiment.

    ``noisy_label`` is the group whose noise is scaled by ``k``; it plays the
    role of group A. ``alpha2=None`` means one-stage selection.
    """

    noisy_label: str = "w"
    sigma_ref: float = 10.0
    k_values: tuple = (1, 4, 7, 10)
    alpha1_grid: tuple = (0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9)
    alpha2: float | None = None
    replications: int = 10
    seed: int = 0
    algorithms: tuple = field(default_factory=lambda: (GroupOblivious(), DemographicParity()))

    def validate(self, n):
        problems = []
        if self.sigma_ref < 0 or any(k < 0 for k in self.k_values):
            problems.append("noise levels must be nonnegative")
        if not self.alpha1_grid or any(not 0 < a <= 1 for a in self.alpha1_grid):
            problems.append("alpha1 grid must be nonempty and inside (0, 1]")
        if self.alpha2 is not None and not 0 < self.alpha2 <= 1:
            problems.append("alpha2 must lie in (0, 1]")
        if self.replications < 1:
            problems.append("replications must be >= 1")
        for a in self.alpha1_grid:
            m1, m2 = self.counts(a, n)
            if m2 < 1:
                problems.append(f"alpha1={a}: m2={m2} < 1 for n={n}")
            elif m2 > m1:
                problems.append(f"alpha1={a}: m2={m2} exceeds m1={m1}")
        if not any(isinstance(s, GroupOblivious) for s in self.algorithms):
            problems.append("the algorithm list must include the group-oblivious reference")
        if problems:
            raise ConfigError("; ".join(problems))

    def counts(self, alpha1, n):
        m1 = math.floor(alpha1 * n)
        m2 = m1 if self.alpha2 is None else math.floor(self.alpha2 * n)
        return m1, m2


@dataclass(frozen=True)
class DatasetRow:
    alpha1: float
    k: float
    algorithm: str
    m1: int
    m2: int
    mean_utility: float
    std_error: float
    gap: float
    mean_xA: float
    mean_xB: float


def _split(data: ScoreData, noisy_label):
    if noisy_label not in data.counts:
        raise ConfigError(f"noisy group label {noisy_label!r} not among {data.labels}")
    group = np.array([GROUP_A if r.group_label == noisy_label else GROUP_B for r in data.records], dtype=np.int8)
    w = np.array([r.score for r in data.records])
    return group, w


def noisy_population(group, w, sigma_A, sigma_B, rng) -> Population:
    """Fresh estimates for fixed true scores; candidate order is file order."""
    sigma = np.where(group == GROUP_A, sigma_A, sigma_B)
    return Population(group, w, w + sigma * rng.standard_normal(w.size))


def run_dataset_experiment(data: ScoreData, config: DatasetExperimentConfig, threads=1):
    """Rows for each (alpha1, k, algorithm), averaged over seeded noise draws.

    The gap of an algorithm is ``(<Q_alg> - <Q_obl>) / <Q_obl>`` with both
    algorithms run on the same noisy populations.
    """
    group, w = _split(data, config.noisy_label)
    n = w.size
    config.validate(n)
    cells = [config.counts(a, n) for a in config.alpha1_grid]
    specs = list(config.algorithms)
    ref = next(i for i, s in enumerate(specs) if isinstance(s, GroupOblivious))

    def work(job):
        ki, r = job
        k = config.k_values[ki]
        rng = substream(config.seed, (ki, r))
        pop = noisy_population(group, w, k * config.sigma_ref, config.sigma_ref, rng)
        return evaluate_population(pop, specs, cells)[0]

    jobs = [(ki, r) for ki in range(len(config.k_values)) for r in range(config.replications)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(work, jobs))
    else:
        out = [work(j) for j in jobs]
    K = config.replications
    data_arr = np.stack(out).reshape(len(config.k_values), K, len(cells), len(specs), 3)

    rows = []
    for ai, a in enumerate(config.alpha1_grid):
        m1, m2 = cells[ai]
        for ki, k in enumerate(config.k_values):
            block = data_arr[ki, :, ai]
            ref_q = block[:, ref, 0].mean()
            for si, spec in enumerate(specs):
                q = block[:, si, 0]
                se = float(q.std(ddof=1) / math.sqrt(K)) if K > 1 else 0.0
                rows.append(DatasetRow(a, k, spec.name, m1, m2, float(q.mean()), se,
                                       float((q.mean() - ref_q) / ref_q),
                                       float(block[:, si, 1].mean()), float(block[:, si, 2].mean())))
    return rows


def histograms(data: ScoreData, sigma_by_label: dict, bins=50, seed=0):
    """Per-group histograms of true scores and one noisy draw of estimates.

    Returns rows ``(label, kind, bin_left, bin_right, count)`` with common
    bin edges for both groups and both kinds.
    """
    labels = np.array([r.group_label for r in data.records])
    w = np.array([r.score for r in data.records])
    rng = np.random.default_rng(seed)
    sigma = np.array([sigma_by_label.get(label, 0.0) for label in labels])
    w_hat = w + sigma * rng.standard_normal(w.size)
    edges = np.histogram_bin_edges(np.concatenate([w, w_hat]), bins=bins)
    rows = []
    for label in data.labels:
        sel = labels == label
        for kind, values in (("W", w[sel]), ("W_hat", w_hat[sel])):
            counts, _ = np.histogram(values, bins=edges)
            rows += [(label, kind, edges[i], edges[i + 1], int(c)) for i, c in enumerate(counts)]
    return rows
