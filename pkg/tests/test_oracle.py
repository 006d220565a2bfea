import math

import numpy as np
import pytest

from convexp import oracle
from convexp.channel import Channel, random_channel
from convexp.errors import BudgetExceededError, DimensionError, InfeasibleError, PreconditionError
from convexp.oracle import Codebook, OracleOptions

LOG2 = math.log(2)


class TestCodebook:
    def test_rejects_duplicates(self):
        with pytest.raises(PreconditionError):
            Codebook(1, ((0,), (0,)))

    def test_rejects_ragged(self):
        with pytest.raises(DimensionError):
            Codebook(2, ((0, 1), (1,)))

    def test_from_words_checks_alphabet(self):
        with pytest.raises(DimensionError):
            Codebook.from_words(Channel.bsc(0.1), [[0], [2]])

    def test_from_words_checks_budget(self):
        with pytest.raises(InfeasibleError):
            Codebook.from_words(Channel.bsc(0.1, (0.0, 1.0)), [[0, 1], [1, 1]], gamma=0.5)

    def test_rate_and_type(self):
        book = Codebook.from_words(Channel.bsc(0.1), [[0, 1], [1, 0]])
        assert book.rate == pytest.approx(LOG2 / 2)
        np.testing.assert_allclose(book.common_type(2), [0.5, 0.5])

    def test_mixed_types(self):
        with pytest.raises(PreconditionError):
            Codebook.from_words(Channel.bsc(0.1), [[0, 0], [1, 0]]).common_type(2)


class TestCorrectProbability:
    def test_identity_is_perfect(self):
        book = Codebook.from_words(Channel.identity(2), [[0], [1]])
        assert oracle.map_correct_probability(book, Channel.identity(2)) == pytest.approx(1.0)

    def test_bsc_single_letter(self):
        book = Codebook.from_words(Channel.bsc(0.11), [[0], [1]])
        assert oracle.map_correct_probability(book, Channel.bsc(0.11)) == pytest.approx(0.89, abs=1e-15)

    def test_map_beats_every_decoder(self):
        w = random_channel(np.random.default_rng(2), 3, 3)
        book = Codebook.from_words(w, [[0, 1], [2, 2], [1, 0]])
        best = oracle.map_correct_probability(book, w)
        regions = oracle.map_decoder(book, w)
        assert oracle.decoder_correct_probability(book, regions, w) == pytest.approx(best, abs=1e-15)
        rng = np.random.default_rng(3)
        for _ in range(50):
            other = rng.integers(0, 3, size=9)
            assert oracle.decoder_correct_probability(book, other, w) <= best + 1e-15

    def test_output_budget(self):
        book = Codebook.from_words(Channel.bsc(0.1), [[0] * 4, [1] * 4])
        with pytest.raises(BudgetExceededError):
            oracle.map_correct_probability(book, Channel.bsc(0.1), OracleOptions(output_budget=8))


class TestBruteForce:
    def test_message_count(self):
        assert oracle.message_count(1, LOG2) == 2
        assert oracle.message_count(2, LOG2) == 4
        assert oracle.message_count(1, 0.0) == 1

    def test_identity_at_log2(self):
        result = oracle.brute_force_gn(1, LOG2, 0.0, Channel.identity(2))
        assert result.g_n == pytest.approx(0.0, abs=1e-12)
        assert result.message_count == 2

    def test_identity_above_log2_is_infeasible(self):
        with pytest.raises(InfeasibleError):
            oracle.brute_force_gn(1, LOG2 + 0.01, 0.0, Channel.identity(2))

    def test_bsc(self):
        result = oracle.brute_force_gn(1, LOG2, 0.0, Channel.bsc(0.11))
        assert result.g_n == pytest.approx(-math.log(0.89), abs=1e-12)

    def test_budget_removes_words(self):
        w = Channel.bsc(0.11, (0.0, 1.0))
        assert oracle.feasible_words(2, 0.5, w) == [(0, 0), (0, 1), (1, 0)]
        with pytest.raises(InfeasibleError):
            oracle.brute_force_gn(2, LOG2, 0.5, w)

    def test_threads_agree(self):
        w = random_channel(np.random.default_rng(4), 3, 2)
        serial = oracle.brute_force_gn(2, 0.7, w.gamma_max, w)
        threaded = oracle.brute_force_gn(2, 0.7, w.gamma_max, w, OracleOptions(threads=3, batch_floats=64))
        assert serial.g_n == threaded.g_n
        assert serial.best_codebook.words == threaded.best_codebook.words

    def test_codebook_budget(self):
        w = random_channel(np.random.default_rng(5), 3, 2)
        with pytest.raises(BudgetExceededError):
            oracle.brute_force_gn(2, 0.7, w.gamma_max, w, OracleOptions(codebook_budget=10))

    def test_subadditivity(self):
        w = random_channel(np.random.default_rng(6), 2, 2)
        lhs, rhs = oracle.subadditivity_check(1, 1, 0.3, w.gamma_max, w)
        assert lhs <= rhs + 1e-9


class TestConstantComposition:
    def test_constant_composition(self):
        w = random_channel(np.random.default_rng(8), 2, 3)
        test = random_channel(np.random.default_rng(9), 2, 3, 0.0)
        book = Codebook.from_words(w, [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        per_word = oracle.constant_composition_divergence(book, test, w)
        assert np.ptp(per_word) <= 1e-12

    def test_log_sum_identity_test_channel(self):
        w = Channel.bsc(0.1)
        book = Codebook.from_words(w, [[0, 1], [1, 0]])
        regions = oracle.map_decoder(book, Channel.identity(2))
        pc, bound = oracle.log_sum_lower_bound(book, regions, Channel.identity(2), w, 0.0)
        assert pc >= bound

    def test_log_sum_needs_good_test_decoder(self):
        w = Channel.bsc(0.1)
        book = Codebook.from_words(w, [[0, 1], [1, 0]])
        with pytest.raises(PreconditionError):
            oracle.log_sum_lower_bound(book, np.zeros(4, dtype=int), Channel.identity(2), w, 0.1)
