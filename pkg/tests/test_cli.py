import json

import numpy as np
import pytest

from fairpost.cli import main
from fairpost.ingest import load_csv, recalibrate
from fairpost.metrics import stats_empirical
from fairpost.thresholding import ThresholdRule, apply_threshold


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    rng = np.random.default_rng(5)
    lines = ["decile_score,two_year_recid,race"]
    for g, shift in (("A", 0.1), ("B", -0.1)):
        for s in range(1, 11):
            p = min(0.95, max(0.05, s / 11 + shift))
            for _ in range(30):
                lines.append(f"{s},{int(rng.random() < p)},{g}")
    path = tmp_path_factory.mktemp("data") / "scores.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_stats_matches_library(data_csv, tmp_path):
    assert run("stats", "--input", data_csv, "--out", tmp_path, "--no-timestamp") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["group_counts"] == {"A": 300, "B": 300}
    ds, _, _ = recalibrate(load_csv(data_csv))
    lib = stats_empirical(ds, apply_threshold(ThresholdRule(0.5, 1)), axis="bucket")
    for g in ("A", "B"):
        assert rep["stats"][g]["ppv"] == pytest.approx(float(lib[g].ppv), abs=1e-15)
    assert rep["calibration_max_deviation"] == 0
    for name in ("profiles.json", "profiles_calibrated.json", "stats.csv"):
        assert (tmp_path / name).exists()


def test_missing_column_exit_2(data_csv, tmp_path, capsys):
    assert run("stats", "--input", data_csv, "--score-col", "nope", "--out", tmp_path) == 2
    assert "nope" in capsys.readouterr().err
    assert run("stats", "--input", tmp_path / "absent.csv", "--out", tmp_path) == 2


def test_reports_byte_identical(data_csv, tmp_path):
    for _ in range(2):
        assert run("equalize", "--input", data_csv, "--mode", "ppv-npv-defer",
                   "--out", tmp_path, "--no-timestamp", "--seed", 1) == 0
        text = (tmp_path / "report.json").read_bytes()
        if _ == 0:
            first = text
    assert text == first


@pytest.mark.parametrize("mode", ["ppv", "npv", "ppv-npv-defer", "ap-defer"])
def test_equalize_modes(data_csv, tmp_path, mode):
    assert run("equalize", "--input", data_csv, "--mode", mode, "--out", tmp_path,
               "--no-timestamp") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert "report.json" in rep["outputs"]
    assert (tmp_path / "stats.csv").exists()


def test_ap_defer_match_anchor(data_csv, tmp_path):
    assert run("equalize", "--input", data_csv, "--mode", "ap-defer", "--strategy", "match:A",
               "--out", tmp_path, "--no-timestamp") == 0


def test_out_of_range_target(data_csv, tmp_path):
    assert run("equalize", "--input", data_csv, "--mode", "ppv", "--target", "0.001",
               "--out", tmp_path) == 3


def test_mass_average_unequal_rates(data_csv, tmp_path, capsys):
    assert run("equalize", "--input", data_csv, "--mode", "mass-average",
               "--out", tmp_path) == 3
    assert "ap-defer" in capsys.readouterr().err


def test_verify_exit_codes(tmp_path, capsys):
    assert run("verify", "constant-score-ppv", "mass-averaging-example", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "PASS constant-score-ppv" in out and "PASS mass-averaging-example" in out
    assert run("verify", "bogus", "--out", tmp_path) == 2


def test_verify_failure_exit_4(tmp_path, monkeypatch, capsys):
    from fairpost import oracle
    monkeypatch.setitem(oracle.CLAIMS, "always-fails",
                        lambda grid, seed: oracle.ClaimReport("always-fails", False))
    assert run("verify", "always-fails", "--out", tmp_path) == 4
    assert "FAIL always-fails" in capsys.readouterr().out
    assert json.loads((tmp_path / "report.json").read_text())["claims"][0]["verdict"] == "fail"
