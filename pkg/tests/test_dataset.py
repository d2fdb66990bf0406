import numpy as np
import pytest

from implicit_variance.asymptotic import DemographicParity, GroupOblivious
from implicit_variance.dataset import (
    EXAM_GROUPS,
    DatasetExperimentConfig,
    ScoreFileError,
    histograms,
    load_scores,
    records_from_arrays,
    run_dataset_experiment,
    synthetic_exam_scores,
    write_scores,
)
from implicit_variance.montecarlo import ConfigError


def _write(tmp_path, text, name="scores.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_three_row_file(tmp_path):
    data = load_scores(_write(tmp_path, "gender,score\nm,12\nw,30.5\nm,-4\n"))
    assert len(data) == 3
    assert data.counts == {"m": 2, "w": 1}
    assert [r.score for r in data.records] == [12.0, 30.5, -4.0]
    assert data.labels == ("m", "w")


def test_custom_columns_and_delimiter(tmp_path):
    path = _write(tmp_path, "id;sex;marks\n1;F;3\n2;M;4\n")
    data = load_scores(path, group_column="sex", score_column="marks", delimiter=";")
    assert data.counts == {"F": 1, "M": 1}


def test_empty_score_reports_line(tmp_path):
    path = _write(tmp_path, "gender,score\nm,1\nw,\nm,2\n")
    with pytest.raises(ScoreFileError, match="line 3"):
        load_scores(path)


def test_non_numeric_and_non_finite_scores(tmp_path):
    with pytest.raises(ScoreFileError, match="line 2"):
        load_scores(_write(tmp_path, "gender,score\nm,abc\nw,1\n"))
    with pytest.raises(ScoreFileError, match="not finite"):
        load_scores(_write(tmp_path, "gender,score\nm,nan\nw,1\n"))


def test_missing_label_and_column(tmp_path):
    with pytest.raises(ScoreFileError, match="empty group label"):
        load_scores(_write(tmp_path, "gender,score\n,1\nw,1\nm,2\n"))
    with pytest.raises(ScoreFileError, match="missing column"):
        load_scores(_write(tmp_path, "sex,score\nm,1\n"))


def test_group_count_must_be_two(tmp_path):
    with pytest.raises(ScoreFileError, match="exactly two"):
        load_scores(_write(tmp_path, "gender,score\nm,1\nw,2\nx,3\n"))
    with pytest.raises(ScoreFileError, match="exactly two"):
        load_scores(_write(tmp_path, "gender,score\nm,1\nm,2\n"))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_scores(tmp_path / "nope.csv")


def test_write_then_load_round_trip(tmp_path):
    labels, scores = ["a", "b", "a"], np.array([0.1, 1 / 3, -2.5e-7])
    path = tmp_path / "rt.csv"
    write_scores(path, labels, scores)
    data = load_scores(path)
    np.testing.assert_array_equal([r.score for r in data.records], scores)


def test_synthetic_fixture_matches_group_moments():
    labels, scores = synthetic_exam_scores(seed=3)
    labels = np.array(labels)
    for label, (count, mean, std, *_) in EXAM_GROUPS.items():
        s = scores[labels == label]
        assert s.size == count
        np.testing.assert_allclose(s.mean(), mean, rtol=1e-12)
        np.testing.assert_allclose(s.std(), std, rtol=1e-12)
        # right-skewed
        assert np.mean((s - s.mean()) ** 3) > 0


def test_synthetic_fixture_is_seeded():
    _, a = synthetic_exam_scores(seed=1)
    _, b = synthetic_exam_scores(seed=1)
    _, c = synthetic_exam_scores(seed=2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def _small_data(seed=0):
    groups = {"m": (600, 30.0, 50.0, 0.25, 2.8, 0.6), "w": (400, 20.0, 40.0, 0.25, 2.6, 0.9)}
    return records_from_arrays(*synthetic_exam_scores(seed, groups))


def test_rows_cover_every_cell_with_exact_counts():
    cfg = DatasetExperimentConfig(k_values=(1, 3), alpha1_grid=(0.05, 0.3), alpha2=0.02, replications=3)
    rows = run_dataset_experiment(_small_data(), cfg)
    assert len(rows) == 2 * 2 * 2
    for r in rows:
        assert (r.m1, r.m2) == (int(r.alpha1 * 1000), 20)
        if r.algorithm == "oblivious":
            assert r.gap == 0.0
        if r.algorithm == "dp":
            assert r.mean_xA == pytest.approx(r.alpha1, abs=1 / 400)


def test_without_noise_oblivious_is_best():
    cfg = DatasetExperimentConfig(sigma_ref=0.0, k_values=(1,), alpha1_grid=(0.05, 0.2, 0.5), replications=2)
    rows = run_dataset_experiment(_small_data(), cfg)
    for r in rows:
        assert r.gap <= 1e-12
        assert r.std_error == 0.0


def test_experiment_is_deterministic_and_thread_safe():
    cfg = DatasetExperimentConfig(k_values=(1, 5), alpha1_grid=(0.1,), replications=4, seed=9)
    data = _small_data()
    assert run_dataset_experiment(data, cfg) == run_dataset_experiment(data, cfg, threads=3)


def test_experiment_config_errors():
    data = _small_data()
    bad = [
        DatasetExperimentConfig(noisy_label="x"),
        DatasetExperimentConfig(alpha1_grid=(0.01,), alpha2=0.05),
        DatasetExperimentConfig(alpha1_grid=(1.5,)),
        DatasetExperimentConfig(replications=0),
        DatasetExperimentConfig(algorithms=(DemographicParity(),)),
    ]
    for cfg in bad:
        with pytest.raises(ConfigError):
            run_dataset_experiment(data, cfg)


def test_histograms_use_fifty_common_bins():
    data = _small_data()
    rows = histograms(data, {"w": 40.0, "m": 10.0}, bins=50, seed=1)
    assert len(rows) == 2 * 2 * 50
    by = {}
    for label, kind, left, right, count in rows:
        by.setdefault((label, kind), []).append((left, right, count))
    edges = {k: [(l, r) for l, r, _ in v] for k, v in by.items()}
    assert len({tuple(e) for e in edges.values()}) == 1
    assert sum(c for _, _, c in by[("w", "W")]) == 400
    assert sum(c for _, _, c in by[("m", "W_hat")]) == 600


def test_oblivious_reference_must_be_present():
    assert any(isinstance(a, GroupOblivious) for a in DatasetExperimentConfig().algorithms)
