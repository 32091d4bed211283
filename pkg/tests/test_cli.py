import csv

import numpy as np
import pytest

from residue_ocp import ModelParams
from residue_ocp.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK, main
from residue_ocp.files import (SWITCH_CLAMP, TRAJECTORY_HEADER, load_config, parse_config,
                               read_control_csv, read_trajectory)

SMALL = "[sim]\nN = 400\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return str(path)


def test_simulate_zero_control_has_no_energy(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--u", "0", "--out", str(out)]) == EXIT_OK
    table = read_trajectory(out)
    assert np.all(table["E"] == 0.0)
    assert table["t"].size == ModelParams().n_steps + 1
    assert capsys.readouterr().out.startswith("objective: ")


def test_simulate_full_diversion_initial_slope(tmp_path):
    out = tmp_path / "traj.csv"
    main(["simulate", "--u", "1", "--out", str(out)])
    table = read_trajectory(out)
    h = table["t"][1]
    first = np.array([table[c][1] - table[c][0] for c in "SRE"]) / h
    np.testing.assert_allclose(first, [-0.05, 0.4, 0.175], rtol=2e-2, atol=1e-3)


def test_trajectory_header_and_blank_adjoints(tmp_path):
    out = tmp_path / "traj.csv"
    main(["simulate", "--u", "0.5", "--out", str(out)])
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRAJECTORY_HEADER
    assert all(c == "" for c in rows[1][5:])


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nalpha = 0.25\nthetaa = 0.2\n")
    assert main(["simulate", "--config", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "thetaa" in err and "line 3" in err


def test_unknown_section():
    with pytest.raises(ValueError, match="unknown section"):
        parse_config("[physics]\nx = 1\n")


def test_invalid_parameter_value():
    with pytest.raises(ValueError, match="alpha"):
        parse_config("[model]\nalpha = -1\n")


def test_inadmissible_control(capsys):
    assert main(["simulate", "--u", "1.5"]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_inadmissible_control_csv(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("u\n" + "\n".join(["0.5"] * 399 + ["1.2"]) + "\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    assert main(["simulate", "--config", str(cfg), "--control-csv", str(path)]) == EXIT_INPUT


def test_empty_config_is_baseline(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    assert load_config(path).params == ModelParams()
    assert load_config("baseline").params == ModelParams()


def test_solve_summary_shows_regimes(tmp_path, capsys):
    out = tmp_path / "opt.csv"
    assert main(["solve", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    regimes = next(l for l in text.splitlines() if l.startswith("regimes:")).split()[1:]
    it = iter(regimes)
    assert all(kind in it for kind in ("upper", "interior", "lower", "upper"))
    table = read_trajectory(out)
    assert np.all(np.abs(table["switch_clamped"]) <= SWITCH_CLAMP)
    assert np.all(table["lambda_S"][-1:] == 0.0)


def test_solve_both_prints_gap(small_cfg, capsys):
    assert main(["solve", "--config", small_cfg, "--method", "both"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "[fbsm]" in text and "[direct]" in text
    rel = float(next(l for l in text.splitlines() if l.startswith("objective_gap_relative")).split()[1])
    assert rel <= 1e-3


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    path = tmp_path / "cap.ini"
    path.write_text(SMALL + "[solver]\nmax_iters = 1\n")
    assert main(["solve", "--config", str(path)]) == EXIT_NONCONVERGED
    assert "did not converge" in capsys.readouterr().err


def test_round_trip_resimulation(tmp_path, small_cfg, capsys):
    opt = tmp_path / "opt.csv"
    main(["solve", "--config", small_cfg, "--out", str(opt)])
    J_solve = float(next(l for l in capsys.readouterr().out.splitlines()
                         if l.startswith("objective:")).split()[1])
    sim = tmp_path / "sim.csv"
    main(["simulate", "--config", small_cfg, "--control-csv", str(opt), "--out", str(sim)])
    J_sim = float(capsys.readouterr().out.split()[1])
    assert J_sim == pytest.approx(J_solve, rel=1e-10)
    a, b = read_trajectory(opt), read_trajectory(sim)
    for c in "SRE":
        np.testing.assert_allclose(a[c], b[c], rtol=1e-10, atol=1e-12)


def test_control_csv_bare_column(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("0.1\n0.2\n0.3\n")
    np.testing.assert_array_equal(read_control_csv(path, 3).values, [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        read_control_csv(path, 5)


def test_builtin_scenarios_command(tmp_path):
    out = tmp_path / "runs"
    assert main(["scenarios", "--out", str(out)]) == EXIT_OK
    names = ["baseline", "no-reinvest", "short-horizon", "long-horizon"]
    for name in names:
        assert (out / f"{name}.csv").exists()
    with open(out / "comparison.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["scenario"] for r in rows] == names
    assert float(rows[0]["J"]) > float(rows[1]["J"])


def test_scenario_file(tmp_path):
    set_file = tmp_path / "set.ini"
    set_file.write_text("[low]\ntheta = 0.1\nN = 200\n\n[high]\ntheta = 0.3\nN = 200\n")
    out = tmp_path / "runs"
    assert main(["scenarios", "--set", str(set_file), "--out", str(out)]) == EXIT_OK
    assert (out / "low.csv").exists() and (out / "high.csv").exists()


def test_outputs_are_byte_identical(tmp_path, small_cfg):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["solve", "--config", small_cfg, "--out", str(a)])
    main(["solve", "--config", small_cfg, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
