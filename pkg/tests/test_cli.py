from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from kfading import cli, ksum

from .conftest import db


def run(capsys, *argv: str) -> tuple[int, str, str]:
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


# --------------------------------------------------------------------------
# schemas


@pytest.mark.parametrize(
    "argv,command",
    [
        (["pdf", "--grid", "0.5:5:4"], "pdf"),
        (["cdf", "--scenario", "iid", "--grid", "0.5:5:4"], "cdf"),
        (["cdf", "--scenario", "ind", "--target", "output", "--grid", "0.5:5:3"], "cdf"),
        (["op", "--N", "2", "--grid", "5:15:3", "--asymptotic", "1"], "op"),
        (["abep", "--N", "2", "--rule", "sinr", "--grid", "5:15:2"], "abep"),
        (["minbranches", "--L", "5", "--k", "1.6", "--grid=-20:-10:3"], "minbranches"),
    ],
)
def test_csv_header_and_rows(capsys, argv, command):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].split(",") == cli.SCHEMAS[command]
    assert len(lines) > 1


def test_json_keys_match_csv_header(capsys):
    code, out, _ = run(capsys, "op", "--grid", "5:15:3", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 3
    for row in rows:
        assert list(row) == cli.SCHEMAS["op"]
    # disabled columns are null, not NaN
    assert rows[0]["mc"] is None


def test_ten_significant_digits(capsys):
    _, out, _ = run(capsys, "cdf", "--grid", "1:1:1")
    value = read_csv(out)[0]["value"]
    mantissa = value.split("e")[0].replace("-", "").replace(".", "")
    assert len(mantissa) == 10


def test_every_value_carries_diagnostics(capsys):
    _, out, _ = run(capsys, "pdf", "--scenario", "ind", "--grid", "0.1:20:5")
    for row in read_csv(out):
        assert int(row["terms_used"]) >= 1
        assert 0 <= float(row["est_error"]) < 1e-9


def test_values_match_library(capsys):
    _, out, _ = run(capsys, "pdf", "--scenario", "iid", "--k", "1.5", "--inr-db", "5", "--L", "4", "--grid", "0.5:8:4")
    rows = read_csv(out)
    prof = ksum.InterferenceProfile.iid(1.5, db(5), 4)
    expected = ksum.interference_pdf(prof, np.array([float(r["gamma"]) for r in rows]))
    assert np.allclose([float(r["value"]) for r in rows], expected, rtol=1e-9)


def test_output_file(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, out, _ = run(capsys, "cdf", "--grid", "1:2:2", "--out", str(path))
    assert code == 0 and out == ""
    assert path.read_text().startswith("gamma,value")


def test_monte_carlo_columns(capsys):
    _, out, _ = run(capsys, "op", "--N", "2", "--rule", "sinr", "--grid", "10:10:1", "--mc-samples", "200000")
    row = read_csv(out)[0]
    assert abs(float(row["exact"]) - float(row["mc"])) < 2.5 * float(row["mc_half_width"])


def test_unreachable_branch_count_is_reported(capsys):
    _, out, _ = run(capsys, "minbranches", "--op-targets", "1e-6", "--grid", "0:0:1")
    assert read_csv(out)[0]["N"] == "-1"


# --------------------------------------------------------------------------
# settings precedence


def test_flag_beats_env_beats_config(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nL = 2\nk = 1.5   # shape\ninr-db = 0\ngrid = 1:1:1\n")
    base = ksum.InterferenceProfile.corr
    expected = lambda k, inr_db, L: ksum.cdf_sum_corr(base(k, db(inr_db), L), 1.0)

    _, out, _ = run(capsys, "cdf", "--config", str(cfg))
    assert float(read_csv(out)[0]["value"]) == pytest.approx(expected(1.5, 0, 2), rel=1e-9)

    monkeypatch.setenv(cli.ENV_PREFIX + "L", "3")
    _, out, _ = run(capsys, "cdf", "--config", str(cfg))
    assert float(read_csv(out)[0]["value"]) == pytest.approx(expected(1.5, 0, 3), rel=1e-9)

    _, out, _ = run(capsys, "cdf", "--config", str(cfg), "--L", "4")
    assert float(read_csv(out)[0]["value"]) == pytest.approx(expected(1.5, 0, 4), rel=1e-9)


# --------------------------------------------------------------------------
# usage errors


@pytest.mark.parametrize(
    "argv",
    [
        ["pdf"],
        ["pdf", "--grid", "1:2:0"],
        ["pdf", "--grid", "1:2"],
        ["pdf", "--grid", "1:5:3", "--L", "2.5"],
        ["pdf", "--grid", "1:5:3", "--k", "-1"],
        ["pdf", "--grid", "1:5:3", "--scenario", "bogus"],
        ["abep", "--grid", "1:5:3", "--mod", "qam:16"],
        ["op", "--grid", "1:5:3", "--N", "2", "--scenario", "iid"],
    ],
)
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert "error" in err


@pytest.mark.parametrize("body", ["L 3\n", "nonsense = 1\n"])
def test_malformed_config(capsys, tmp_path, body):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    code, _, err = run(capsys, "pdf", "--grid", "1:2:2", "--config", str(cfg))
    assert code == 2
    assert "bad.cfg:1" in err


def test_missing_config(capsys, tmp_path):
    code, _, err = run(capsys, "pdf", "--grid", "1:2:2", "--config", str(tmp_path / "absent.cfg"))
    assert code == 2 and "cannot read" in err


# --------------------------------------------------------------------------
# validate


def test_validate_unknown_check(capsys):
    code, _, err = run(capsys, "validate", "--checks", "normalization,bogus")
    assert code == 2
    assert "bogus" in err


def test_validate_subset_echoes_seed(capsys):
    code, out, _ = run(capsys, "validate", "--checks", "abep_routes,monte_carlo", "--seed", "123")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("INFO seed: 123")
    assert [line.split()[0] for line in lines[1:]] == ["PASS", "PASS"]


def test_validate_json(capsys):
    code, out, _ = run(capsys, "validate", "--checks", "reductions", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    assert rows[0] == {"check": "seed", "status": "INFO", "detail": "20240601"}
    assert rows[1]["status"] == "PASS"


@pytest.mark.slow
def test_validate_full_run(capsys):
    code, out, _ = run(capsys, "validate")
    assert code == 0, out


# --------------------------------------------------------------------------
# runtime and entry point


def test_decay_profile_curves_are_fast(capsys):
    start = time.perf_counter()
    for target in ("interference", "output"):
        code, _, _ = run(capsys, "pdf", "--scenario", "ind", "--k", "3", "--inr-db", "15", "--L", "3",
                         "--target", target, "--grid", "0.05:60:400")
        assert code == 0
    assert time.perf_counter() - start < 10.0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kfading", "cdf", "--grid", "1:2:2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("gamma,value,terms_used,est_error")
