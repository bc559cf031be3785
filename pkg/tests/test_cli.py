import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from maxconf import cli
from maxconf.cli import SWEEP_COLUMNS, RunConfig, UsageError, main, num


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_num_formatting():
    assert num(1 / 3) == 0.333333333333
    assert num(-1e-17) == 0.0
    assert str(num(-0.0)) == "0.0"
    assert num(float("nan")) is None
    assert num(None) is None
    assert num(123456789.123456) == 123456789.123


@pytest.mark.parametrize(
    "kwargs",
    [
        {"theta_step": 0},
        {"theta_step": -1},
        {"theta_start": 30, "theta_end": 10},
        {"leak_intensity": 0.051},
        {"leak_intensity": -0.001},
        {"theta_end": 50},
        {"strategies": ("unambiguous",)},
        {"leak_phase_grid": ()},
    ],
)
def test_run_config_invariants(kwargs):
    with pytest.raises(UsageError):
        RunConfig(**kwargs)


def test_default_grid_is_ten_points():
    assert RunConfig().thetas() == [0, 5, 10, 15, 20, 25, 30, 35, 40, 45]


def test_default_sweep_has_ten_records(capsys):
    code, out, _ = run(["sweep"], capsys)
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0].keys()) == SWEEP_COLUMNS
    assert len(rows) == 30
    assert sorted({float(r["theta_deg"]) for r in rows}) == [0, 5, 10, 15, 20, 25, 30, 35, 40, 45]


def test_header_order(capsys):
    _, out, _ = run(["sweep", "--theta-start", "10", "--theta-end", "10"], capsys)
    header = out.splitlines()[0].split(",")
    assert header[:8] == ["theta_deg", "input_index", "p_pd0", "p_pd1", "p_pd2", "p_pdq", "conf_mc", "conf_me"]
    assert header[8:13] == ["envelope_lo_pd0", "envelope_lo_pd1", "envelope_lo_pd2", "envelope_lo_pdq", "envelope_lo_conf"]
    assert header[13:] == ["envelope_hi_pd0", "envelope_hi_pd1", "envelope_hi_pd2", "envelope_hi_pdq", "envelope_hi_conf"]


def test_single_theta_max_confidence(capsys):
    code, out, _ = run(
        ["sweep", "--theta-start", "30", "--theta-end", "30", "--strategy", "max_confidence", "--format", "json"],
        capsys,
    )
    assert code == 0
    rec = json.loads(out)["records"]
    assert len(rec) == 1
    assert rec[0]["confidence_max_confidence"] == pytest.approx([2 / 3] * 3, abs=1e-9)
    assert rec[0]["confidence_min_error"] is None


def test_min_error_only_leaves_mc_columns_blank(capsys):
    code, out, _ = run(["sweep", "--strategy", "min_error", "--theta-step", "15"], capsys)
    assert code == 0
    for r in read_csv(out):
        assert r["conf_mc"] == "" and r["p_pd0"] == "" and r["envelope_hi_conf"] == ""
        t = np.deg2rad(float(r["theta_deg"]))
        assert float(r["conf_me"]) == pytest.approx((1 + np.sin(2 * t)) / 3, abs=1e-11)


def test_zero_leak_envelopes_equal_ideal(capsys):
    _, out, _ = run(["sweep", "--leak", "0", "--theta-step", "15"], capsys)
    for r in read_csv(out):
        # envelopes come from the solved network, p_* from the POVM itself
        for d in ("pd0", "pd1", "pd2", "pdq"):
            assert r[f"envelope_lo_{d}"] == r[f"envelope_hi_{d}"]
            assert float(r[f"envelope_lo_{d}"]) == pytest.approx(float(r[f"p_{d}"]), abs=1e-6)
        assert r["envelope_lo_conf"] == r["envelope_hi_conf"]
        if r["conf_mc"]:
            assert float(r["envelope_lo_conf"]) == pytest.approx(float(r["conf_mc"]), abs=1e-6)


def test_theta_zero_never_firing_cells_blank(capsys):
    _, out, _ = run(["sweep", "--theta-end", "0"], capsys)
    for r in read_csv(out):
        assert r["conf_mc"] == ""
        assert float(r["p_pdq"]) == 1.0


def test_json_round_trip_and_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["sweep", "--format", "json", "--out", str(a)]) == 0
    assert main(["sweep", "--format", "json", "--out", str(b)]) == 0
    text = a.read_text()
    assert json.dumps(json.loads(text), indent=2) + "\n" == text
    assert a.read_bytes() == b.read_bytes()


def test_csv_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["table", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_table_rows(capsys):
    code, out, _ = run(["table", "--format", "json"], capsys)
    assert code == 0
    rows = {r["theta_deg"]: r for r in json.loads(out)["rows"]}
    assert len(rows) == 10
    r45 = rows[45.0]
    for got, want in zip((r45["hwp4"], r45["hwp5"], r45["hwp6"], r45["hwp7"]), (22.5, 45, 17.6, 45)):
        assert abs(got - want) <= 0.2
    assert abs(rows[25.0]["hwp4"] - 7.7) <= 0.2
    r0 = rows[0.0]
    assert abs(r0["hwp4"]) < 1e-6 and abs(r0["hwp7"]) < 1e-6
    assert all(r["angle_match"] for r in rows.values())
    assert all(r["network_residual"] < 1e-6 for r in rows.values())


def test_table_off_grid_rows_blank(capsys):
    _, out, _ = run(["table", "--theta-start", "2.5", "--theta-end", "2.5"], capsys)
    row = read_csv(out)[0]
    assert row["table_hwp4"] == "" and row["angle_match"] == "" and row["max_dev_deg"] == ""
    assert float(row["network_residual"]) < 1e-8


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--theta-step", "0"],
        ["sweep", "--theta-start", "20", "--theta-end", "10"],
        ["sweep", "--leak", "0.2"],
        ["table", "--out", "/nonexistent-dir/x.csv"],
        ["verify", "--theta-step", "-1"],
    ],
)
def test_bad_arguments_exit_two(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert "error" in err


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--format", "xml"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--leak-phase-grid", "a,b"])
    assert exc.value.code == 2


def test_leak_phase_grid_flag(capsys):
    _, out, _ = run(["sweep", "--theta-start", "20", "--theta-end", "20", "--leak-phase-grid", "0", "--format", "json"], capsys)
    doc = json.loads(out)
    assert doc["config"]["leak_phase_grid"] == [0.0]
    env = doc["records"][0]["nonideal_envelope"]
    assert env["intensity_lo"] == env["intensity_hi"]


def test_verify_passes(capsys):
    code, out, _ = run(["verify"], capsys)
    assert code == 0
    assert "[FAIL]" not in out


def test_verify_mutation_mode_fails(capsys):
    code, out, _ = run(["verify", "--mutate"], capsys)
    assert code == 1
    assert "[FAIL] POVM completeness" in out


def test_solver_failure_exits_one(monkeypatch, capsys):
    def boom(thetas):
        raise cli.optics.SolverError(12.0, 1e-3)

    monkeypatch.setattr(cli.optics, "solve_grid", boom)
    code, _, err = run(["sweep"], capsys)
    assert code == 1
    assert "theta=12" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "maxconf", "sweep", "--theta-start", "45", "--theta-end", "45"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("theta_deg,input_index")
