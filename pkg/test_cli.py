"""
End-to-end tests for the peakgate command line
"""

import io
import json
from pathlib import Path

import pandas as pd
import pytest

from constants import ESTIMATE_FLAG, ExitCode
from models import RatioReport, ReproductionReport, SolveReport, dump_config, load_config, parse_config
from peakgate import main
from systems import read_orbit_csv

CONFIGS = Path(__file__).parent / "configs"


def write_config(tmp_path: Path, data: dict, name: str = "config.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps({"version": 1, **data}))
    return str(path)


def kl_config(**certificate) -> dict:
    return {"kind": "kl", "theta1": "identity", "theta2": "sqrt", "psi_sup": "max_norm_sq", **certificate}


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ==========================================
# solve
# ==========================================

def test_solve_scenario_a(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_a_kl_pi1.json"))
    assert code == ExitCode.OK
    assert "argmax rank          2" in out
    assert "stopping integer     7" in out


def test_solve_json_report_scenario_d(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_d_lyapunov_pi2.json"), "--format", "json")
    assert code == ExitCode.OK
    report = SolveReport.model_validate_json(out)
    assert report.stopping_integer == 316
    assert report.argmax_rank == 7
    assert report.optimum == pytest.approx(0.0435835, rel=1e-5)
    assert report.certificate_summary.beta == pytest.approx(0.9706, rel=1e-4)
    assert report.maximizing_point == 0
    assert report.usefulness


def test_solve_with_trace(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_a_kl_pi1.json"), "--trace")
    assert code == ExitCode.OK
    assert "f_value" in out
    assert "k_after" in out


def test_solve_trace_table_shows_infinity(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_a_kl_pi1.json"), "--trace")
    assert code == ExitCode.OK
    trace_lines = out.split("\n\n", 1)[1]
    assert "inf" in trace_lines
    assert "NaN" not in trace_lines


def test_run_flags_before_the_subcommand(capsys):
    code, out, _ = run(capsys, "--format", "json", "solve", str(CONFIGS / "scenario_d_lyapunov_pi2.json"))
    assert code == ExitCode.OK
    assert SolveReport.model_validate_json(out).stopping_integer == 316


def test_flag_after_the_subcommand_wins(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "a", "objective": {"kind": "linear", "coefficients": [0.0, 0.0]},
                                   "certificate": kl_config()})
    code, _, err = run(capsys, "--guard", "5000", "solve", path, "--guard", "20")
    assert code == ExitCode.GUARD_EXCEEDED
    assert "first 20 ranks" in err


def test_solve_csv_trace(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_a_kl_pi1.json"), "--trace", "--format", "csv")
    assert code == ExitCode.OK
    trace = pd.read_csv(io.StringIO(out))
    assert list(trace["k"]) == list(range(8))


def test_solve_compares_certificates(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "scenario_b_compare_pi1.json"), "--format", "json")
    assert code == ExitCode.OK
    report = SolveReport.model_validate_json(out)
    assert [c.label for c in report.candidates] == ["kl", "lyapunov-continuous"]
    assert report.stopping_integer == 2
    assert report.argmax_rank == 1


def test_solve_affine_with_estimated_ratio(capsys):
    code, out, _ = run(capsys, "solve", str(CONFIGS / "affine_estimate.json"), "--format", "json")
    assert code == ExitCode.OK
    report = SolveReport.model_validate_json(out)
    assert report.objective_offset == 0.25
    assert report.optimum == pytest.approx(1.75)
    assert report.argmax_rank == 0
    assert report.certificate_summary.ratio_is_estimate
    assert report.certificate_summary.beta == pytest.approx(0.26, rel=1e-9)
    assert any(ESTIMATE_FLAG in w for w in report.warnings)


def test_solve_rejects_beta_at_least_one(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "a", "objective": {"kind": "coordinate", "index": 1},
                                   "certificate": kl_config(decay=1.5)})
    code, _, err = run(capsys, "solve", path)
    assert code == ExitCode.CONFIG_ERROR
    assert "(0,1)" in err


def test_solve_guard_exceeded(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "a", "objective": {"kind": "linear", "coefficients": [0.0, 0.0]},
                                   "certificate": kl_config()})
    code, _, err = run(capsys, "solve", path, "--guard", "20")
    assert code == ExitCode.GUARD_EXCEEDED
    assert "first 20 ranks" in err


def test_solve_domination_violation(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "b", "objective": {"kind": "coordinate", "index": 1},
                                   "certificate": kl_config(psi_sup=0.01)})
    code, _, err = run(capsys, "solve", path)
    assert code == ExitCode.DOMINATION_VIOLATION
    assert "domination" in err


def test_solve_non_finite_orbit(tmp_path, capsys):
    path = write_config(tmp_path, {"initial_points": [[10.0, 10.0]],
                                   "objective": {"kind": "linear", "coefficients": [0.0, 0.0]},
                                   "certificate": kl_config()})
    code, _, _ = run(capsys, "solve", path)
    assert code == ExitCode.NON_FINITE


def test_solve_rejects_lyapunov_ratio_that_fails_the_decrease_check(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "d", "objective": {"kind": "coordinate", "index": 2},
                                   "certificate": {"kind": "lyapunov",
                                                   "ratio": {"mode": "explicit", "value": 0.05}}})
    code, out, err = run(capsys, "solve", path)
    assert code == ExitCode.CONFIG_ERROR
    assert "V(T(x)) > 0.05 V(x)" in err
    assert out == ""


def test_solve_accepts_explicit_ratio_above_the_closed_form(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "d", "objective": {"kind": "coordinate", "index": 2},
                                   "certificate": {"kind": "lyapunov",
                                                   "ratio": {"mode": "explicit", "value": 0.98}}})
    code, out, _ = run(capsys, "solve", path, "--format", "json")
    assert code == ExitCode.OK
    report = SolveReport.model_validate_json(out)
    assert report.argmax_rank == 7
    assert report.optimum == pytest.approx(0.0435835, rel=1e-5)


def test_solve_removes_objective_offset(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "a",
                                   "objective": {"kind": "linear", "coefficients": [1.0, 0.0], "constant": 5.0},
                                   "certificate": {"kind": "lyapunov"}})
    code, out, _ = run(capsys, "solve", path, "--format", "json")
    assert code == ExitCode.OK
    report = SolveReport.model_validate_json(out)
    assert report.objective_offset == 5.0
    assert report.normalized_optimum == pytest.approx(0.03463, rel=1e-3)
    assert report.optimum == pytest.approx(5.03463, rel=1e-5)
    assert report.stopping_integer == 2


def test_solve_dimension_mismatch(tmp_path, capsys):
    path = write_config(tmp_path, {"initial_points": [[1.0, 0.0, 0.0]],
                                   "objective": {"kind": "coordinate", "index": 1},
                                   "certificate": kl_config()})
    code, _, err = run(capsys, "solve", path)
    assert code == ExitCode.CONFIG_ERROR
    assert "dimension" in err


def test_solve_missing_file(capsys):
    code, _, _ = run(capsys, "solve", "does-not-exist.json")
    assert code == ExitCode.CONFIG_ERROR


def test_usage_error_is_a_config_error(capsys):
    code, _, _ = run(capsys, "solve")
    assert code == ExitCode.CONFIG_ERROR


def test_config_round_trip():
    config = load_config(CONFIGS / "scenario_b_compare_pi1.json")
    assert parse_config(dump_config(config)) == config


# ==========================================
# reproduce
# ==========================================

def test_reproduce_passes(capsys):
    code, out, _ = run(capsys, "reproduce", "--scenario", "a", "--certificate", "kl", "--objective", "1",
                       "--format", "json")
    assert code == ExitCode.OK
    assert ReproductionReport.model_validate_json(out).passed


def test_reproduce_table(capsys):
    code, out, _ = run(capsys, "reproduce", "--scenario", "c", "--certificate", "lyapunov", "--objective", "2")
    assert code == ExitCode.OK
    assert "88" in out


def test_reproduce_kl_outside_region(capsys):
    code, _, err = run(capsys, "reproduce", "--scenario", "c", "--certificate", "kl", "--objective", "1")
    assert code == ExitCode.CONFIG_ERROR
    assert "scenarios a and b" in err


def test_reproduce_mismatch_exit_code(capsys, monkeypatch):
    from reproduction import REFERENCE_VALUES, Reference

    monkeypatch.setitem(REFERENCE_VALUES, ("a", "kl", 2), [Reference("K", 9, exact=True)])
    code, _, err = run(capsys, "reproduce", "--scenario", "a", "--certificate", "kl", "--objective", "2")
    assert code == ExitCode.REPRODUCTION_MISMATCH
    assert "mismatch: K" in err


# ==========================================
# orbit
# ==========================================

def test_orbit_to_csv_file(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "c"})
    out_path = tmp_path / "orbit.csv"
    code, _, _ = run(capsys, "orbit", config, "--horizon", "5", "--out", str(out_path))
    assert code == ExitCode.OK
    table = read_orbit_csv(out_path)
    assert len(table) == 6
    last = table.iloc[-1]
    assert last["k"] == 5
    assert (last["x1"], last["x2"]) == pytest.approx((0.37921, 0.15155), rel=1e-3)


def test_orbit_horizon_zero(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "d"})
    code, out, _ = run(capsys, "orbit", config, "--horizon", "0", "--format", "csv")
    assert code == ExitCode.OK
    table = pd.read_csv(io.StringIO(out))
    assert len(table) == 2
    assert list(table["x1"]) == [-2.3, -2.5]


def test_orbit_negative_horizon(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "d"})
    code, _, _ = run(capsys, "orbit", config, "--horizon", "-1")
    assert code == ExitCode.CONFIG_ERROR


# ==========================================
# ratio
# ==========================================

def test_ratio_closed_form(capsys):
    code, out, _ = run(capsys, "ratio", "--builtin-V", "--radius-sq", "8.9", "--format", "json")
    assert code == ExitCode.OK
    report = RatioReport.model_validate_json(out)
    assert report.value == pytest.approx(0.9706, rel=1e-4)
    assert report.flag is None


def test_ratio_estimate_matches_closed_form(capsys):
    code, out, _ = run(capsys, "ratio", "--builtin-V", "--radius-sq", "5.7341", "--mode", "estimate",
                       "--format", "json")
    assert code == ExitCode.OK
    report = RatioReport.model_validate_json(out)
    assert report.value == pytest.approx(0.36581, rel=1e-3)
    assert report.flag == ESTIMATE_FLAG
    assert len(report.refinement_trail) == 4


def test_ratio_estimate_of_identity_map(tmp_path, capsys):
    config = write_config(tmp_path, {
        "system": {"kind": "affine", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "initial_points": [[0.5, 0.5]],
        "certificate": {
            "kind": "lyapunov",
            "V": {"terms": [{"coefficient": 1.0, "exponents": [2, 0]},
                            {"coefficient": 1.0, "exponents": [0, 2]}]},
            "radius_sq": 1.0,
            "ratio": {"mode": "estimate", "samples": 2000},
        },
    })
    code, out, _ = run(capsys, "ratio", config, "--mode", "estimate", "--format", "json")
    assert code == ExitCode.OK
    assert RatioReport.model_validate_json(out).value == 1.0


def test_ratio_radius_out_of_range(capsys):
    code, _, _ = run(capsys, "ratio", "--builtin-V", "--radius-sq", "9.0")
    assert code == ExitCode.CONFIG_ERROR


def test_ratio_needs_a_source(capsys):
    code, _, _ = run(capsys, "ratio")
    assert code == ExitCode.CONFIG_ERROR
