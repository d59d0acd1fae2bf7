import csv
import io
import json
import math

import pytest

from gvx.cli import EXIT_CONVERGENCE, EXIT_INVALID, EXIT_OK, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCdfCommand:
    def test_reference_value_json(self, capsys):
        code, out, _ = run_cli(capsys, "cdf", "--dist", "s", "--alpha", "1",
                               "--n", "10", "--at", "2")
        assert code == EXIT_OK
        body = json.loads(out)
        assert body["cdf"] == pytest.approx(0.98530379, abs=1e-8)
        assert body["est_error"] <= 1e-7
        for key in ["alpha", "n", "statistic", "x", "cdf", "representation",
                    "terms_used", "est_error"]:
            assert key in body

    def test_gamma_reduction(self, capsys):
        code, out, _ = run_cli(capsys, "cdf", "--dist", "ssq", "--alpha", "1",
                               "--n", "1", "--at", "1.5")
        assert code == EXIT_OK
        assert json.loads(out)["cdf"] == pytest.approx(
            1 - math.exp(-1.5), abs=1e-10)

    def test_angle_tan(self, capsys):
        code, out, _ = run_cli(capsys, "cdf", "--dist", "angle-tan",
                               "--alpha", "1", "--n", "2", "--at", "0.5")
        assert code == EXIT_OK
        assert json.loads(out)["cdf"] == pytest.approx(0.5, abs=1e-12)

    def test_range_csv(self, capsys):
        code, out, _ = run_cli(capsys, "cdf", "--alpha", "1", "--n", "2",
                               "--at", "0.5:1.5:0.5", "--format", "csv")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["x", "cdf", "est_error", "terms_used",
                           "representation"]
        assert len(rows) == 4
        xs = [float(r[0]) for r in rows[1:]]
        assert xs == [0.5, 1.0, 1.5]
        cdfs = [float(r[1]) for r in rows[1:]]
        assert cdfs == sorted(cdfs)

    def test_determinism(self, capsys):
        _, out1, _ = run_cli(capsys, "cdf", "--alpha", "2", "--n", "3",
                             "--at", "1.7")
        _, out2, _ = run_cli(capsys, "cdf", "--alpha", "2", "--n", "3",
                             "--at", "1.7")
        assert out1 == out2

    def test_invalid_parameters_exit_2(self, capsys):
        code, _, _ = run_cli(capsys, "cdf", "--alpha", "-1", "--n", "3",
                             "--at", "1.0")
        assert code == EXIT_INVALID
        code, _, _ = run_cli(capsys, "cdf", "--alpha", "1", "--n", "3",
                             "--dist", "u", "--at", "0.1")
        assert code == EXIT_INVALID

    def test_bad_range_exit_2(self, capsys):
        code, _, _ = run_cli(capsys, "cdf", "--alpha", "1", "--n", "3",
                             "--at", "2:1:0.5")
        assert code == EXIT_INVALID


class TestOtherCommands:
    def test_coeffs_csv_header(self, capsys):
        code, out, _ = run_cli(capsys, "coeffs", "--alpha", "1", "--n", "2",
                               "--kmax", "4", "--format", "csv")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["k", "beta_sign", "log_abs_beta", "mu", "gamma",
                           "delta_lambda"]
        assert float(rows[1][3]) == pytest.approx(math.pi / 2, rel=1e-12)

    def test_coeffs_log_form_beyond_double(self, capsys):
        code, out, _ = run_cli(capsys, "coeffs", "--alpha", "3", "--n", "10",
                               "--kmax", "700", "--format", "csv")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(out)))
        assert any(r[3].startswith("log:") for r in rows[1:])

    def test_angle_coeff_dump(self, capsys):
        code, out, _ = run_cli(capsys, "angle", "--alpha", "1", "--n", "2",
                               "--coeffs", "--format", "csv")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["j", "a_2j"]
        assert float(rows[1][1]) == pytest.approx(2.0, rel=1e-12)

    def test_angle_value(self, capsys):
        code, out, _ = run_cli(capsys, "angle", "--alpha", "1", "--n", "2",
                               "--t", "0.5")
        assert code == EXIT_OK
        assert json.loads(out)["cdf"] == pytest.approx(0.5, abs=1e-12)

    def test_table(self, capsys):
        code, out, _ = run_cli(capsys, "table", "--alpha", "1", "--n", "3",
                               "--dist", "svar", "--at", "0.5:2.0:0.5")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(out)))
        assert len(rows) == 5
        cdfs = [float(r[1]) for r in rows[1:]]
        assert cdfs == sorted(cdfs)

    def test_config_print(self, capsys):
        code, out, _ = run_cli(capsys, "config", "print")
        assert code == EXIT_OK
        body = json.loads(out)
        assert body["defaults"]["tol"] == 1e-10

    def test_verify_small(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--alpha", "1", "--n", "2",
                               "--samples", "20000", "--seed", "3")
        assert code == EXIT_OK
        body = json.loads(out)
        assert body["passed"] is True

    def test_env_budget_respected(self, capsys, monkeypatch):
        monkeypatch.setenv("GVX_MAX_TERMS", "64")
        code, out, _ = run_cli(capsys, "cdf", "--alpha", "1", "--n", "2",
                               "--at", "1.0")
        assert code == EXIT_OK
        assert json.loads(out)["terms_used"] <= 64
