import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from implicit_variance.cli import CURVE_HEADER, DATASET_HEADER, HIST_HEADER, MC_HEADER, main
from implicit_variance.dataset import write_scores


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _curve(tmp_path, *flags):
    out = tmp_path / "curve.csv"
    assert main(["asymptotic-curve", "--out", str(out), *flags]) == 0
    return _read(out)


def test_curve_at_half_is_flat(tmp_path):
    header, rows = _curve(tmp_path, "--alpha1", "0.5")
    assert header == CURVE_HEADER
    assert len(rows) == 4
    q = [float(r[6]) for r in rows]
    assert max(q) - min(q) < 1e-8
    assert all(abs(float(r[7])) < 1e-8 for r in rows)


def test_two_point_grid_row_count(tmp_path):
    _, rows = _curve(tmp_path, "--alpha1", "0.2,0.4", "--algorithms", "oblivious,dp,gamma=0.8")
    assert len(rows) == 2 * 3
    assert [r[1] for r in rows[:3]] == ["oblivious", "dp", "gamma=0.8"]


def test_two_stage_dp_gap_sign_pattern(tmp_path):
    _, rows = _curve(tmp_path, "--p-a", "0.4", "--sigma-a", "3", "--sigma-b", "0.2", "--alpha2", "0.1",
                     "--alpha1", "0.1:1:19", "--algorithms", "oblivious,dp")
    gaps = {float(r[0]): float(r[7]) for r in rows if r[1] == "dp"}
    assert gaps[0.1] > 0.1
    assert all(gaps[a] > 0 for a in (0.55, 0.7, 0.9))
    assert min(gaps.values()) < 0
    assert min(gaps.values()) > -0.02


def test_twelve_significant_digits(tmp_path):
    _, rows = _curve(tmp_path, "--alpha1", "0.15", "--algorithms", "oblivious")
    q = rows[0][6]
    assert len(q.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) <= 12
    assert float(q) == pytest.approx(1.70243, abs=5e-6)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p_A": 0.4, "sigma_A": 3, "sigma_B": 0.2, "alpha1": [0.3, 0.6],
                               "algorithms": ["oblivious"]}))
    _, rows = _curve(tmp_path, "--config", str(cfg), "--alpha1", "0.3")
    assert len(rows) == 1


def test_pareto_distribution_from_config(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"distribution": {"kind": "pareto", "scale": 1, "shape": 3},
                               "sigma_A": 4, "sigma_B": 1, "alpha1": [0.02], "algorithms": ["oblivious", "dp"]}))
    _, rows = _curve(tmp_path, "--config", str(cfg))
    assert float(rows[1][7]) > 0


def test_curve_usage_errors(tmp_path, capsys):
    assert main(["asymptotic-curve", "--alpha1", "0,1.5"]) == 2
    assert main(["asymptotic-curve", "--algorithms", "magic"]) == 2
    assert main(["asymptotic-curve", "--config", str(tmp_path / "none.json")]) == 2
    err = capsys.readouterr().err
    assert "alpha1" in err and "magic" in err


def _mc(tmp_path, name, *flags):
    out = tmp_path / name
    assert main(["montecarlo", "--out", str(out), *flags]) == 0
    return out


def test_montecarlo_smoke_one_row_per_grid_point(tmp_path):
    out = _mc(tmp_path, "mc.csv", "--n", "100", "--m1", "10,50,100", "--m2", "10", "--replications", "1")
    header, rows = _read(out)
    assert header == MC_HEADER
    assert [(r[1], r[3]) for r in rows] == [(m, a) for m in ("10", "50", "100") for a in ("oblivious", "dp")]
    assert all(r[-1] == "1" for r in rows)


def test_montecarlo_seed_changes_values_not_schema(tmp_path):
    flags = ["--n", "100", "--m1", "30", "--m2", "10", "--replications", "5"]
    a = _read(_mc(tmp_path, "a.csv", *flags, "--seed", "1"))
    b = _read(_mc(tmp_path, "b.csv", *flags, "--seed", "2"))
    assert a[0] == b[0] and len(a[1]) == len(b[1])
    assert [r[:4] for r in a[1]] == [r[:4] for r in b[1]]
    assert a[1][0][4] != b[1][0][4]


def test_montecarlo_is_byte_deterministic(tmp_path):
    flags = ["--n", "100", "--m1", "20,60", "--m2", "10", "--replications", "20", "--seed", "7"]
    a = _mc(tmp_path, "a.csv", *flags).read_bytes()
    b = _mc(tmp_path, "b.csv", *flags, "--threads", "3").read_bytes()
    assert a == b
    assert a.count(b"\r\n") == 5


def test_montecarlo_rejects_bad_counts():
    assert main(["montecarlo", "--n", "100", "--m1", "5", "--m2", "10"]) == 2
    assert main(["montecarlo", "--algorithms", "optimal", "--replications", "1"]) == 2


def test_dataset_missing_file(tmp_path, capsys):
    missing = tmp_path / "absent.csv"
    assert main(["dataset", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_dataset_malformed_file(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("gender,score\nm,1\nw,\n")
    assert main(["dataset", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_dataset_rows_and_histogram(tmp_path):
    rng = np.random.default_rng(0)
    scores = tmp_path / "s.csv"
    write_scores(scores, ["m"] * 300 + ["w"] * 200, rng.normal(0, 10, 500), group_column="sex",
                 score_column="marks", delimiter=";")
    out, hist = tmp_path / "d.csv", tmp_path / "h.csv"
    code = main(["dataset", str(scores), "--group-col", "sex", "--score-col", "marks", "--delimiter", ";",
                 "--k", "1,4", "--alpha1", "0.1,0.5", "--replications", "2", "--out", str(out),
                 "--emit-histogram", str(hist)])
    assert code == 0
    header, rows = _read(out)
    assert header == DATASET_HEADER
    assert len(rows) == 2 * 2 * 2
    h_header, h_rows = _read(hist)
    assert h_header == HIST_HEADER
    assert len(h_rows) == 2 * 2 * 50


def test_dataset_synthetic_fixture(tmp_path):
    fixture, out = tmp_path / "fx.csv", tmp_path / "d.csv"
    code = main(["dataset", "--make-synthetic", str(fixture), "--k", "1", "--alpha1", "0.5",
                 "--replications", "1", "--out", str(out)])
    assert code == 0
    assert fixture.exists()
    assert len(_read(out)[1]) == 2


def test_verify_core_passes(capsys):
    assert main(["verify", "core"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "checks passed" in out


def test_verify_unknown_suite_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nonsense"])
    assert exc.value.code == 2


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("implicit-variance") is None, reason="console script not installed")
def test_console_script_writes_to_stdout():
    res = subprocess.run(["implicit-variance", "asymptotic-curve", "--alpha1", "0.5", "--algorithms", "dp"],
                         capture_output=True, text=True, check=True)
    lines = res.stdout.splitlines()
    assert lines[0].split(",") == CURVE_HEADER
    assert len(lines) == 2


def test_utility_along_x_a_is_concave(tmp_path):
    _, rows = _curve(tmp_path, "--alpha1", "0.15", "--algorithms", "optimal", "--xa-grid", "50")
    fixed = [(float(r[2]), float(r[6])) for r in rows if r[1] == "fixed"]
    assert len(fixed) == 50
    x, q = np.array(fixed).T
    assert np.all(np.diff(q, 2) < 0)
    assert x[np.argmax(q)] < 0.15
    assert float(rows[0][6]) >= q.max()


def test_x_a_grid_needs_two_points():
    assert main(["asymptotic-curve", "--alpha1", "0.3", "--xa-grid", "1"]) == 2


def test_sign_change_report(tmp_path, capsys):
    _, rows = _curve(tmp_path, "--alpha2", "0.1", "--alpha1", "0.1:1:46", "--algorithms", "oblivious,dp",
                     "--sign-changes")
    err = capsys.readouterr().err
    assert err.startswith("dp: gap changes sign in [0.18, 0.2], [0.48, 0.52]")


def test_montecarlo_band_columns(tmp_path):
    header, rows = _read(_mc(tmp_path, "z.csv", "--n", "100", "--m1", "100", "--m2", "10", "--replications", "50"))
    r = dict(zip(header, rows[0]))
    z = (float(r["mean_Q"]) - float(r["asymptotic_Q"])) / float(r["std_err"])
    assert float(r["z_vs_asymptotic"]) == pytest.approx(z)
    assert r["within_1se"] == str(int(abs(z) <= 1)) and r["within_2se"] == str(int(abs(z) <= 2))
