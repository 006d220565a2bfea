import json
import math
from pathlib import Path

import pytest

from convexp import cli
from convexp.verify import CheckResult, VerifyReport

LOG2 = math.log(2)
CHANNELS = Path(cli.__file__).parent / "channels"
IDENTITY = str(CHANNELS / "identity2.json")
BSC = str(CHANNELS / "bsc011.json")
FAST = ["--mu-points", "5", "--rho-points", "9", "--lambda-points", "5"]


def run(capsys, *argv):
    status = cli.main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


class TestCapacityCommand:
    def test_json(self, capsys):
        status, out, _ = run(capsys, "capacity", "--channel", BSC, "--gamma", "0.5")
        assert status == 0
        document = json.loads(out)
        assert document["kind"] == "capacity"
        h = -0.11 * math.log(0.11) - 0.89 * math.log(0.89)
        assert document["value_nats"] == pytest.approx(LOG2 - h, abs=1e-8)
        assert document["value_bits"] == pytest.approx((LOG2 - h) / LOG2, abs=1e-8)

    def test_csv_grid(self, capsys):
        status, out, _ = run(capsys, "capacity", "--channel", BSC, "--gamma-grid", "0:0.5:3", "--format", "csv")
        lines = out.splitlines()
        assert status == 0
        assert lines[0] == "# convexp-capacity v1"
        assert lines[1] == "gamma,value_nats,value_bits,mu,gap"
        assert len(lines) == 5

    def test_default_gamma_warns(self, capsys, caplog):
        status, out, _ = run(capsys, "capacity", "--channel", IDENTITY)
        assert status == 0
        assert json.loads(out)["gamma"] == 0.0
        assert "No budget specified" in caplog.text

    def test_metrics(self, capsys):
        _, out, _ = run(capsys, "capacity", "--channel", IDENTITY, "--gamma", "0", "--metrics")
        metrics = json.loads(out)["metrics"]
        assert metrics["operation"] == "capacity"
        assert metrics["status"] == "ok"
        assert "solve.capacity" in metrics["timers"]

    def test_cheapest_budget_reports_null_multiplier(self, capsys):
        status, out, _ = run(capsys, "capacity", "--channel", BSC, "--gamma", "0")
        assert status == 0
        assert "Infinity" not in out
        document = json.loads(out, parse_constant=_reject_constant)
        assert document["mu"] is None
        assert document["value_nats"] == pytest.approx(0.0, abs=1e-12)


class TestErrors:
    def test_malformed_channel(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"input_alphabet": ["0"], "output_alphabet": ["0"], "W": [[0.5]], "cost": [0]}')
        status, out, err = run(capsys, "capacity", "--channel", str(path))
        assert status == 2
        assert out == ""
        record = json.loads(err)
        assert record["error"] == "channel_spec"
        assert record["type"] == "ChannelSpecError"

    def test_missing_rate(self, capsys):
        status, _, err = run(capsys, "exponent", "--channel", IDENTITY, "--gamma", "0")
        assert status == 1
        assert json.loads(err)["error"] == "precondition"

    def test_bad_grid_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["curve", "--channel", IDENTITY, "--rate-grid", "x:y"])
        assert info.value.code == 2

    def test_unknown_method(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["exponent", "--channel", IDENTITY, "--rate", "1", "--method", "zz"])

    def test_bad_thread_env(self, capsys, mocker):
        mocker.patch.dict("os.environ", {"CONVEXP_THREADS": "none"})
        with pytest.raises(SystemExit):
            cli.main(["capacity", "--channel", IDENTITY])


class TestExponentCommands:
    @pytest.mark.slow
    def test_curve_identity(self, capsys):
        grid = f"{LOG2}:{LOG2 + 1}:3"
        status, out, _ = run(capsys, "curve", "--channel", IDENTITY, "--gamma", "0", "--rate-grid", grid, *FAST)
        assert status == 0
        lines = out.splitlines()
        assert lines[0] == "# convexp-curve v1"
        assert lines[1].split(",") == cli.CURVE_COLUMNS
        for line in lines[2:]:
            row = dict(zip(cli.CURVE_COLUMNS, line.split(",")))
            expected = float(row["rate_nats"]) - LOG2
            for column in ("g_oh", "g_ar", "g_dk"):
                assert float(row[column]) == pytest.approx(expected, abs=1e-5)

    @pytest.mark.slow
    def test_exponent_dump_joint(self, capsys):
        status, out, _ = run(capsys, "exponent", "--channel", IDENTITY, "--gamma", "0", "--rate", str(LOG2 + 0.5),
                             "--method", "dk", "--dump-joint", "--bits", *FAST)
        assert status == 0
        document = json.loads(out)
        assert set(document) >= {"rate_nats", "rate_bits", "value", "mu", "lambda", "stationarity_gap", "joint"}
        assert "dk" not in document
        assert document["value"] == pytest.approx(0.5, abs=1e-5)
        assert len(document["joint"]) == 2

    @pytest.mark.slow
    def test_single_method_fields_are_top_level(self, capsys):
        status, out, _ = run(capsys, "exponent", "--channel", BSC, "--gamma", "0.5", "--rate", "0.6", "--method", "ar",
                             *FAST)
        assert status == 0
        document = json.loads(out)
        assert set(document) >= {"gamma", "rate_nats", "value", "mu", "rho", "kkt_gap", "boundary_hit"}
        assert "ar" not in document
        assert document["value"] > 0
        assert document["kkt_gap"] <= 1e-9

    @pytest.mark.slow
    def test_several_methods_stay_nested(self, capsys):
        status, out, _ = run(capsys, "exponent", "--channel", IDENTITY, "--gamma", "0", "--rate", str(LOG2 + 0.5),
                             "--method", "oh,dk", *FAST)
        assert status == 0
        document = json.loads(out)
        assert document["oh"]["value"] == pytest.approx(document["dk"]["value"], abs=1e-5)
        assert "value" not in document

    @pytest.mark.slow
    def test_threads_do_not_change_output(self, capsys, mocker):
        argv = ["curve", "--channel", BSC, "--gamma", "0.5", "--rate-grid", "0.3,0.6", "--method", "ar", *FAST]
        _, serial, _ = run(capsys, *argv, "--threads", "1")
        mocker.patch.dict("os.environ", {"CONVEXP_THREADS": "3"})
        _, threaded, _ = run(capsys, *argv)
        assert serial == threaded


class TestOracleAndSpectrum:
    def test_oracle_identity(self, capsys):
        status, out, _ = run(capsys, "oracle", "--channel", IDENTITY, "--n", "1", "--rate", str(LOG2), "--gamma", "0")
        assert status == 0
        document = json.loads(out)
        assert document["g_n"] == pytest.approx(0.0, abs=1e-12)
        assert document["best_codebook"] == [[0], [1]]
        assert document["messages"] == 2

    def test_oracle_infeasible(self, capsys):
        status, _, err = run(capsys, "oracle", "--channel", IDENTITY, "--n", "1", "--rate", str(LOG2 + 0.1))
        assert status == 1
        assert json.loads(err)["error"] == "infeasible"

    def test_oracle_budget(self, capsys):
        status, _, err = run(capsys, "oracle", "--channel", BSC, "--n", "3", "--rate", "0.5", "--budget", "3")
        assert status == 1
        assert json.loads(err)["error"] == "budget"

    def test_spectrum_random(self, capsys):
        status, out, _ = run(capsys, "spectrum", "--channel", BSC, "--n", "2", "--mu", "0.3", "--lambda", "1.5",
                             "--seed", "4")
        assert status == 0
        document = json.loads(out)
        assert len(document["phi_trace"]) == 2
        assert document["omega_recursive"] == pytest.approx(document["omega_direct"], abs=1e-10)
        assert document["bound_checks"]["potential_cap"]

    def test_spectrum_iid_file(self, capsys, tmp_path):
        law = tmp_path / "law.json"
        law.write_text("[0.5, 0.5]")
        status, out, _ = run(capsys, "spectrum", "--channel", IDENTITY, "--n", "2", "--lambda", "1",
                             "--process", f"iid:{law}", "--rate", str(LOG2 + 0.4))
        assert status == 0
        document = json.loads(out)
        assert document["phi_trace"] == pytest.approx([LOG2, LOG2], abs=1e-12)
        assert document["exponent_lower_bound"][0]["value"] == pytest.approx(0.2 - LOG2 / 2, abs=1e-10)


class TestOutput:
    def test_output_file(self, capsys, tmp_path):
        target = tmp_path / "capacity.csv"
        status, out, _ = run(capsys, "capacity", "--channel", IDENTITY, "--gamma", "0", "--format", "csv",
                             "--output", str(target))
        assert status == 0
        assert out == ""
        assert target.read_text().startswith("# convexp-capacity v1\n")

    def test_render_is_deterministic(self):
        output = cli.RunOutput("oracle", ["a", "b"], [{"a": 0.1, "b": 3}], {"a": 0.1})
        assert cli.render(output, cli.OutputFormat.CSV) == "# convexp-oracle v1\na,b\n0.1,3\n"

    def test_non_finite_numbers_render_as_null(self):
        document = {"mu": math.inf, "log_phi": [0.5, -math.inf, math.nan], "nested": {"lambda": math.inf}}
        output = cli.RunOutput("spectrum", [], [], document)
        rendered = json.loads(cli.render(output, cli.OutputFormat.JSON), parse_constant=_reject_constant)
        assert rendered["mu"] is None
        assert rendered["log_phi"] == [0.5, None, None]
        assert rendered["nested"] == {"lambda": None}


class TestVerifyCommand:
    def test_ok(self, capsys, mocker):
        mocker.patch.object(cli, "run_checks", return_value=VerifyReport([CheckResult("cramer", instances=3)]))
        mocker.patch.object(cli, "verify_channel", side_effect=lambda w, name, *_: CheckResult(f"channel:{name}", 1))
        status, out, _ = run(capsys, "verify", "--scale", "0.1")
        document = json.loads(out)
        assert status == 0
        assert document["ok"]
        assert {c["name"] for c in document["checks"]} >= {"cramer", "channel:identity2", "channel:bsc011"}

    def test_violation_exits_nonzero(self, capsys, mocker):
        mocker.patch.object(cli, "run_checks", return_value=VerifyReport([CheckResult("one_shot", 5, 1, 0.2)]))
        mocker.patch.object(cli, "verify_channel", return_value=CheckResult("channel:x", 1))
        status, out, _ = run(capsys, "verify", "--channel", IDENTITY)
        assert status == 1
        assert not json.loads(out)["ok"]

    @pytest.mark.slow
    def test_reduced_suite_passes(self, capsys):
        status, out, _ = run(capsys, "verify", "--scale", "0.02", "--channel", BSC)
        document = json.loads(out, parse_constant=_reject_constant)
        assert status == 0, [c for c in document["checks"] if c["violations"]]
        assert document["ok"]
        assert {c["name"] for c in document["checks"]} >= {"decomposition", "oracle_dominance", "channel:bsc011"}
