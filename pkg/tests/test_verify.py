from types import SimpleNamespace

import numpy as np
import pytest

from convexp import verify
from convexp.channel import Channel
from convexp.oracle import message_count
from convexp.search import SearchOptions
from convexp.telemetry import Metrics

QUICK = ("cramer", "one_shot", "tilted_bound", "tilt_recursion", "potential_cap", "map_optimality",
         "capacity_certificate", "arimoto_equivalence", "decomposition")


class TestCheckResult:
    def test_record(self):
        result = verify.CheckResult("x")
        result.record(-1.0, "fine")
        result.record(0.5, "bad")
        assert (result.instances, result.violations, result.worst) == (2, 1, 0.5)
        assert result.details == ["bad"]
        assert not result.ok

    def test_failed(self):
        result = verify.CheckResult("x")
        result.failed("ConvergenceError: stuck")
        assert result.to_record()["violations"] == 1


class TestRunChecks:
    def test_quick_checks_pass(self):
        metrics = Metrics().start("verify")
        report = verify.run_checks(verify.VerifyOptions(scale=0.02, only=QUICK), metrics)
        assert [c.name for c in report.checks] == [name for name in verify.CHECKS if name in QUICK]
        assert report.ok, [c.to_record() for c in report.checks if not c.ok]
        assert metrics.counters["verify.checks"] == sum(c.instances for c in report.checks)

    def test_subset_does_not_change_instances(self):
        alone = verify.run_checks(verify.VerifyOptions(scale=0.02, only=("cramer",)))
        together = verify.run_checks(verify.VerifyOptions(scale=0.02, only=("cramer", "one_shot")))
        assert alone.checks[0].worst == together.checks[0].worst

    def test_unknown_check(self):
        with pytest.raises(ValueError):
            verify.run_checks(verify.VerifyOptions(only=("nope",)))

    @pytest.mark.slow
    def test_identity_and_oracle_checks(self):
        options = verify.VerifyOptions(scale=0.05, only=("identity_channel", "oracle_monotonicity"),
                                       search=SearchOptions(mu_points=5, rho_points=17, lambda_points=9))
        report = verify.run_checks(options)
        assert report.ok, [c.to_record() for c in report.checks]

    def test_oracle_dominance_uses_interior_budgets(self, mocker):
        mocker.patch.object(verify, "g_dk", return_value=SimpleNamespace(value=0.0))
        oracle = mocker.spy(verify, "brute_force_gn")
        result = verify.CheckResult("oracle_dominance")
        verify.check_oracle_dominance(np.random.default_rng(2), 4, verify.VerifyOptions(), result)
        assert result.ok, result.details
        calls = [call.args[:4] for call in oracle.call_args_list]
        assert any(gamma < channel.gamma_max - 1e-9 for _, _, gamma, channel in calls)
        # every drawn code fits in its feasible set
        assert all(message_count(n, rate) <= len(verify.feasible_words(n, gamma, channel))
                   for n, rate, gamma, channel in calls)


class TestVerifyChannel:
    @pytest.mark.slow
    def test_identity(self):
        options = verify.VerifyOptions(search=SearchOptions(mu_points=5, rho_points=17, lambda_points=9))
        result = verify.verify_channel(Channel.identity(2), "identity2", options)
        assert result.ok, result.details
        assert result.instances == 3
