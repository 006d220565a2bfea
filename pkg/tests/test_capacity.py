import math
import types

import numpy as np
import pytest

import convexp
from convexp import capacity, verify
from convexp.channel import Channel, Distribution, mutual_information, random_channel
from convexp.errors import ConvergenceError, InfeasibleError


def h(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


class TestCapacity:
    def test_identity(self):
        result = capacity.capacity(Channel.identity(2), 0.0)
        assert result.value == pytest.approx(math.log(2), abs=1e-9)
        assert result.duality_gap <= 1e-8

    def test_useless_channel(self):
        assert capacity.capacity(Channel.bsc(0.5, (0.0, 1.0)), 0.3).value == pytest.approx(0.0, abs=1e-12)

    def test_bsc_unconstrained_optimum_is_feasible(self):
        result = capacity.capacity(Channel.bsc(0.11, (0.0, 1.0)), 0.5)
        assert result.value == pytest.approx(math.log(2) - h(0.11), abs=1e-8)
        assert result.lagrange_mu == 0.0

    def test_bsc_zero_budget(self):
        result = capacity.capacity(Channel.bsc(0.11, (0.0, 1.0)), 0.0)
        assert result.value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.optimal_input.weights, [1.0, 0.0])

    def test_active_budget(self):
        w = Channel.bsc(0.11, (0.0, 1.0))
        result = capacity.capacity(w, 0.1)
        assert result.optimal_input.expectation(w.cost) == pytest.approx(0.1, abs=1e-9)
        assert result.lagrange_mu > 0
        # binary input with P(1) = 0.1 is the only feasible point on the budget line
        assert result.value == pytest.approx(mutual_information([0.9, 0.1], w), abs=1e-8)

    def test_infeasible_budget(self):
        with pytest.raises(InfeasibleError):
            capacity.capacity(Channel.bsc(0.11, (0.5, 1.0)), 0.1)

    def test_curve_is_nondecreasing(self):
        w = random_channel(np.random.default_rng(7), 3, 3)
        gammas = np.linspace(w.gamma_0, w.gamma_max, 6).tolist()
        values = [r.value for r in capacity.capacity_curve(w, gammas, threads=2)]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))

    def test_curve_threads_do_not_change_results(self):
        w = random_channel(np.random.default_rng(11), 3, 2)
        gammas = np.linspace(w.gamma_0, w.gamma_max, 4).tolist()
        serial = [r.value for r in capacity.capacity_curve(w, gammas)]
        parallel = [r.value for r in capacity.capacity_curve(w, gammas, threads=3)]
        assert serial == parallel

    def test_every_multiplier_starts_cold(self):
        # at this budget the bracketing optimizers live on different supports
        w = verify._channel(np.random.default_rng([0, 5]), 2, 3)
        result = capacity.capacity(w, 0.3213)
        assert result.duality_gap <= 1e-8
        assert result.optimal_input.expectation(w.cost) <= 0.3213 + 1e-9

    def test_unconverged_solves_raise(self, mocker):
        w = random_channel(np.random.default_rng(1), 4, 3)
        stuck = capacity.TiltedSolution(Distribution.uniform(4), 0.0, 0.1, 0.2, 1, False)
        solve = mocker.patch.object(capacity, "blahut_arimoto", return_value=stuck)
        with pytest.raises(ConvergenceError):
            capacity.capacity(w, w.gamma_max)
        # one retry with a longer budget, warm-started from the stuck point
        assert solve.call_count == 2
        assert solve.call_args.kwargs["options"].max_iterations == 10 * capacity.CapacityOptions().max_iterations
        assert solve.call_args.kwargs["initial"] is stuck.optimal_input

    def test_module_is_not_shadowed(self):
        assert isinstance(convexp.capacity, types.ModuleType)
        assert convexp.capacity.capacity_curve is convexp.capacity_curve


class TestBlahutArimoto:
    def test_bracket_contains_value(self):
        w = random_channel(np.random.default_rng(1), 4, 3)
        solution = capacity.blahut_arimoto(w, mu=0.5)
        assert solution.converged
        assert solution.value <= solution.upper + 1e-15
        assert solution.gap <= capacity.CapacityOptions().tolerance

    def test_unconverged_is_flagged(self, caplog):
        w = random_channel(np.random.default_rng(1), 4, 3)
        solution = capacity.blahut_arimoto(w, mu=0.5, options=capacity.CapacityOptions(max_iterations=1))
        assert not solution.converged
        assert solution.gap > 0
        assert "Blahut-Arimoto at mu=0.5 did not reach" in caplog.text
