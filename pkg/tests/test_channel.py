import json
import math

import numpy as np
import pytest

from convexp import channel
from convexp.channel import Channel, Distribution, JointDistribution, TiltParams
from convexp.errors import ChannelSpecError, DimensionError, PreconditionError

IDENTITY = {"input_alphabet": ["0", "1"], "output_alphabet": ["0", "1"], "W": [[1, 0], [0, 1]], "cost": [0, 0]}
BSC = {"input_alphabet": ["0", "1"], "output_alphabet": ["0", "1"], "W": [[0.89, 0.11], [0.11, 0.89]],
       "cost": [0, 1]}


def h(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


class TestLoadChannel:
    def test_identity(self):
        w = channel.load_channel(IDENTITY)
        assert w.gamma_0 == 0 and w.gamma_max == 0
        assert w.input_labels == ("0", "1")

    def test_bsc_from_text(self):
        w = channel.load_channel(json.dumps(BSC))
        assert w.gamma_0 == 0 and w.gamma_max == 1
        assert channel.channel_to_spec(w) == {**BSC, "W": [[0.89, 0.11], [0.11, 0.89]], "cost": [0.0, 1.0]}

    def test_from_file(self, tmp_path):
        path = tmp_path / "bsc.json"
        path.write_text(json.dumps(BSC), encoding="utf-8")
        assert channel.load_channel(str(path)).output_size == 2

    def test_row_sum_reports_row(self):
        bad = {**BSC, "W": [[0.89, 0.11], [0.2, 0.7]]}
        with pytest.raises(ChannelSpecError, match="Row 1"):
            channel.load_channel(bad)

    def test_missing_key(self):
        with pytest.raises(ChannelSpecError, match="missing"):
            channel.load_channel({k: v for k, v in BSC.items() if k != "cost"})

    def test_negative_cost(self):
        with pytest.raises(ChannelSpecError):
            channel.load_channel({**BSC, "cost": [0, -1]})

    def test_not_json(self):
        with pytest.raises(ChannelSpecError):
            channel.load_channel("{not json")

    def test_error_record(self):
        with pytest.raises(ChannelSpecError) as info:
            channel.load_channel({**BSC, "W": [[1.0, 0.0]]})
        assert info.value.record()["error"] == "channel_spec"
        assert info.value.exit_status == 2


class TestInformation:
    def test_identity_mutual_information(self):
        assert channel.mutual_information([0.5, 0.5], Channel.identity(2)) == pytest.approx(math.log(2), abs=1e-15)

    def test_bsc_mutual_information(self):
        value = channel.mutual_information([0.5, 0.5], Channel.bsc(0.11))
        assert value == pytest.approx(math.log(2) - h(0.11), abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            channel.mutual_information([1 / 3] * 3, Channel.bsc(0.11))

    def test_conditional_divergence_bsc(self):
        q = JointDistribution.compose([0.5, 0.5], Channel.bsc(0.2).transition)
        expected = 0.2 * math.log(0.2 / 0.11) + 0.8 * math.log(0.8 / 0.89)
        assert channel.conditional_divergence(q, Channel.bsc(0.11)) == pytest.approx(expected, abs=1e-14)

    def test_conditional_divergence_off_support(self):
        q = JointDistribution.compose([0.5, 0.5], Channel.bsc(0.1).transition)
        assert math.isinf(channel.conditional_divergence(q, Channel.identity(2)))

    def test_conditional_divergence_of_channel_is_zero(self):
        w = channel.random_channel(np.random.default_rng(3), 3, 4)
        q = JointDistribution.compose([0.2, 0.3, 0.5], w.transition)
        assert channel.conditional_divergence(q, w) == pytest.approx(0.0, abs=1e-15)


class TestTypes:
    def test_distribution_rejects_bad_sum(self):
        with pytest.raises(PreconditionError):
            Distribution(np.array([0.5, 0.6]))

    def test_joint_marginals(self):
        q = JointDistribution(np.array([[0.1, 0.2], [0.3, 0.4]]))
        np.testing.assert_allclose(q.input_marginal.weights, [0.3, 0.7])
        np.testing.assert_allclose(q.output_marginal.weights, [0.4, 0.6])
        np.testing.assert_allclose(q.forward().sum(axis=1), [1.0, 1.0])

    def test_tilt_params_from_rho(self):
        assert TiltParams.from_rho(0.5, 0.5).lam == pytest.approx(1.0)
        assert math.isinf(TiltParams.from_rho(0.5, 1.0).lam)
        with pytest.raises(PreconditionError):
            TiltParams.from_rho(0.5, 1.5)

    def test_tilt_params_reject_negative(self):
        with pytest.raises(PreconditionError):
            TiltParams(-1.0, 1.0)
