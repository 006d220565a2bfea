from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, islice, product
import logging
import math
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, rel_entr

from .channel import Channel, JointDistribution, binary_entropy, conditional_divergence
from .errors import BudgetExceededError, CertificateError, DimensionError, InfeasibleError, PreconditionError

COST_SLACK = 1e-12
Word = Tuple[int, ...]
TestChannel = Union[Channel, np.ndarray]


@dataclass
class OracleOptions:
    # |Y|^n cap for dense likelihood tables
    output_budget: int = 10**6
    # cap on C(|S|, M) codebooks per search
    codebook_budget: int = 10**7
    # also search M + 1 and assert the best P_c does not grow
    check_larger_codes: bool = True
    # cap on chunk_size * M * |Y|^n floats per vectorized batch
    batch_floats: int = 2**22
    threads: int = 1


@dataclass(frozen=True)
class Codebook:
    """Distinct input words of a common blocklength ``n``, one per message."""

    n: int
    words: Tuple[Word, ...]

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError(f"Blocklength must be positive; got {self.n}.")
        if not self.words:
            raise PreconditionError("A codebook needs at least one word.")
        for word in self.words:
            if len(word) != self.n:
                raise DimensionError(f"Word {word} does not have length {self.n}.")
        if len(set(self.words)) != len(self.words):
            raise PreconditionError("Codewords must be pairwise distinct.")

    @classmethod
    def from_words(cls, channel: Channel, words: Sequence[Sequence[int]], gamma: Optional[float] = None) -> Codebook:
        words = tuple(tuple(int(x) for x in word) for word in words)
        if not words:
            raise PreconditionError("A codebook needs at least one word.")
        book = cls(len(words[0]), words)
        for word in words:
            if min(word) < 0 or max(word) >= channel.input_size:
                raise DimensionError(f"Word {word} uses symbols outside the {channel.input_size}-letter input alphabet.")
        if gamma is not None:
            costs = book.average_costs(channel)
            worst = int(np.argmax(costs))
            if costs[worst] > gamma + COST_SLACK:
                raise InfeasibleError(f"Word {words[worst]} has average cost {costs[worst]} above the budget {gamma}.")
        return book

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def rate(self) -> float:
        return math.log(self.size) / self.n

    def average_costs(self, channel: Channel) -> np.ndarray:
        return channel.cost[np.array(self.words)].mean(axis=1)

    def composition(self, input_size: int) -> np.ndarray:
        """Empirical type of every word, one row per message."""
        counts = np.zeros((self.size, input_size))
        for row, word in enumerate(self.words):
            np.add.at(counts[row], list(word), 1.0)
        return counts / self.n

    def common_type(self, input_size: int) -> np.ndarray:
        types = self.composition(input_size)
        if not np.allclose(types, types[0], rtol=0.0, atol=1e-15):
            raise PreconditionError("Codewords do not share one type.")
        return types[0]


@dataclass(frozen=True, eq=False)
class OracleResult:
    g_n: float
    best_codebook: Codebook
    pc: float
    codebooks_searched: int
    message_count: int


def _check_output_budget(n: int, channel: Channel, options: OracleOptions):
    size = channel.output_size ** n
    if size > options.output_budget:
        raise BudgetExceededError(f"|Y|^n = {size} exceeds the output budget {options.output_budget}.")


def message_count(n: int, rate: float) -> int:
    """Smallest M with (1/n) log M >= R."""
    if rate <= 0:
        return 1
    return max(1, math.ceil(math.exp(n * rate) - 1e-9))


def feasible_words(n: int, gamma: float, channel: Channel, options: Optional[OracleOptions] = None) -> List[Word]:
    """S_Gamma^(n): input words of average cost at most gamma, in lexicographic order."""
    options = options or OracleOptions()
    if channel.input_size ** n > options.output_budget:
        raise BudgetExceededError(f"|X|^n = {channel.input_size ** n} exceeds the budget {options.output_budget}.")
    cost = channel.cost
    return [word for word in product(range(channel.input_size), repeat=n)
            if cost[list(word)].mean() <= gamma + COST_SLACK]


def _word_law(word: Sequence[int], transition: np.ndarray) -> np.ndarray:
    law = transition[word[0]]
    for x in word[1:]:
        law = np.kron(law, transition[x])
    return law


def likelihoods(
    words: Sequence[Sequence[int]],
    channel: Union[Channel, np.ndarray],
    options: Optional[OracleOptions] = None,
) -> np.ndarray:
    """W^n(y^n | word) as an (M, |Y|^n) table; y^n runs in lexicographic order."""
    options = options or OracleOptions()
    transition = channel.transition if isinstance(channel, Channel) else np.asarray(channel, dtype=float)
    n = len(words[0])
    if transition.shape[1] ** n > options.output_budget:
        raise BudgetExceededError(f"|Y|^n = {transition.shape[1] ** n} exceeds the output budget "
                                  f"{options.output_budget}.")
    return np.stack([_word_law(word, transition) for word in words])


def map_decoder(codebook: Codebook, channel: Channel, options: Optional[OracleOptions] = None) -> np.ndarray:
    """Message index decoded for every y^n; ties go to the smallest index."""
    return np.argmax(likelihoods(codebook.words, channel, options), axis=0)


def decoder_correct_probability(
    codebook: Codebook,
    regions: np.ndarray,
    channel: TestChannel,
    options: Optional[OracleOptions] = None,
) -> float:
    table = likelihoods(codebook.words, channel, options)
    regions = np.asarray(regions)
    if regions.shape != (table.shape[1],):
        raise DimensionError(f"Decoder maps {regions.shape} outputs; expected {table.shape[1]}.")
    if regions.min() < 0 or regions.max() >= codebook.size:
        raise DimensionError(f"Decoder regions must name messages 0..{codebook.size - 1}.")
    return float(table[regions, np.arange(table.shape[1])].sum() / codebook.size)


def map_correct_probability(codebook: Codebook, channel: Channel, options: Optional[OracleOptions] = None) -> float:
    """(1/M) sum over y^n of max_k W^n(y^n | x^n(k))."""
    table = likelihoods(codebook.words, channel, options)
    return float(table.max(axis=0).sum() / codebook.size)


def _batches(count: int, size: int, chunk: int) -> Iterator[List[Tuple[int, ...]]]:
    subsets = combinations(range(count), size)
    while True:
        batch = list(islice(subsets, chunk))
        if not batch:
            return
        yield batch


def _best_in_batch(table: np.ndarray, batch: List[Tuple[int, ...]]) -> Tuple[float, Tuple[int, ...]]:
    index = np.array(batch)
    scores = table[index].max(axis=1).sum(axis=1)
    best = int(np.argmax(scores))
    return float(scores[best]), batch[best]


def _search(table: np.ndarray, size: int, options: OracleOptions) -> Tuple[float, Tuple[int, ...], int]:
    """Best M-subset of the rows of ``table`` by sum_y max; the lexicographically first subset wins ties."""
    count = table.shape[0]
    total = int(comb(count, size, exact=True))
    if total > options.codebook_budget:
        raise BudgetExceededError(f"C({count}, {size}) = {total} codebooks exceed the budget "
                                  f"{options.codebook_budget}.")
    chunk = max(1, options.batch_floats // max(size * table.shape[1], 1))
    threads = max(options.threads, 1)
    best_score, best_subset = -math.inf, ()
    batches = _batches(count, size, chunk)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        while True:
            wave = list(islice(batches, threads))
            if not wave:
                break
            for score, subset in pool.map(lambda batch: _best_in_batch(table, batch), wave):
                if score > best_score:
                    best_score, best_subset = score, subset
    return best_score / size, best_subset, total


def brute_force_gn(
    n: int,
    rate: float,
    gamma: float,
    channel: Channel,
    options: Optional[OracleOptions] = None,
) -> OracleResult:
    """G^(n)(R, Gamma) by exhaustive search over codebooks of M = ceil(e^{nR}) feasible words under MAP decoding."""
    options = options or OracleOptions()
    _check_output_budget(n, channel, options)
    words = feasible_words(n, gamma, channel, options)
    size = message_count(n, rate)
    if size > len(words):
        raise InfeasibleError(f"M = {size} messages need more than the {len(words)} words of average cost "
                              f"<= {gamma} at n = {n}.")

    table = likelihoods(words, channel, options)
    pc, subset, searched = _search(table, size, options)
    logging.debug(f"n={n}, M={size}: searched {searched} codebooks, best P_c = {pc!r}.")

    if options.check_larger_codes and size + 1 <= len(words) \
            and comb(len(words), size + 1, exact=True) <= options.codebook_budget:
        larger, _, more = _search(table, size + 1, options)
        searched += more
        if larger > pc * (1.0 + 1e-12) + 1e-15:
            raise CertificateError(f"Best P_c grew from {pc!r} to {larger!r} when M went from {size} to {size + 1}.")

    book = Codebook(n, tuple(words[i] for i in subset))
    return OracleResult(-math.log(pc) / n, book, pc, searched, size)


def subadditivity_check(
    n: int,
    m: int,
    rate: float,
    gamma: float,
    channel: Channel,
    options: Optional[OracleOptions] = None,
) -> Tuple[float, float]:
    """G^(n+m) <= [n G^(n) + m G^(m)] / (n + m); returns (lhs, rhs)."""
    lhs = brute_force_gn(n + m, rate, gamma, channel, options).g_n
    rhs = (n * brute_force_gn(n, rate, gamma, channel, options).g_n
           + m * brute_force_gn(m, rate, gamma, channel, options).g_n) / (n + m)
    if lhs > rhs + 1e-9:
        raise CertificateError(f"Subadditivity fails at n={n}, m={m}: {lhs!r} > {rhs!r}.")
    return lhs, rhs


def _test_transition(test_channel: TestChannel, channel: Channel) -> np.ndarray:
    transition = test_channel.transition if isinstance(test_channel, Channel) else np.asarray(test_channel, float)
    if transition.shape != channel.transition.shape:
        raise DimensionError(f"Test channel has shape {transition.shape}; expected {channel.transition.shape}.")
    if np.any(transition < 0) or not np.allclose(transition.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
        raise PreconditionError("Test channel rows must be probability vectors.")
    return transition


def _single_letter_divergence(q_type: np.ndarray, transition: np.ndarray, channel: Channel) -> float:
    return conditional_divergence(JointDistribution(q_type[:, None] * transition), channel)


def constant_composition_divergence(
    codebook: Codebook,
    test_channel: TestChannel,
    channel: Channel,
    options: Optional[OracleOptions] = None,
) -> np.ndarray:
    """n-letter D(q^n(.|x^n) || W^n(.|x^n)) of every word; each must equal n D(q||W|type)."""
    transition = _test_transition(test_channel, channel)
    q_type = codebook.common_type(channel.input_size)
    tested = likelihoods(codebook.words, transition, options)
    reference = likelihoods(codebook.words, channel, options)
    per_word = rel_entr(tested, reference).sum(axis=1)
    expected = codebook.n * _single_letter_divergence(q_type, transition, channel)

    for word, value in zip(codebook.words, per_word):
        if math.isinf(expected) or math.isinf(value):
            matches = math.isinf(expected) and math.isinf(value)
        else:
            matches = abs(value - expected) <= 1e-12 * max(1.0, abs(expected))
        if not matches:
            raise CertificateError(f"Word {word} has divergence {value!r}; expected n D = {expected!r}.")
    return per_word


def log_sum_lower_bound(
    codebook: Codebook,
    regions: np.ndarray,
    test_channel: TestChannel,
    channel: Channel,
    delta: float,
    options: Optional[OracleOptions] = None,
) -> Tuple[float, float]:
    """P_c under W of a decoder that is correct with probability >= 1 - delta under the test channel.

    bound = exp{-n[(1 - delta)^{-1} D(q||W|type) + eta_n(delta)]}, eta_n = (1/n)(1 - delta)^{-1} h(1 - delta).
    """
    if not 0.0 <= delta < 0.5:
        raise PreconditionError(f"delta must lie in [0, 1/2); got {delta}.")
    transition = _test_transition(test_channel, channel)
    q_type = codebook.common_type(channel.input_size)
    pc_test = decoder_correct_probability(codebook, regions, transition, options)
    if pc_test < 1.0 - delta - 1e-12:
        raise PreconditionError(f"The decoder is correct with probability {pc_test!r} under the test channel; "
                                f"at least {1.0 - delta} is required.")

    n = codebook.n
    divergence = _single_letter_divergence(q_type, transition, channel)
    eta = binary_entropy(1.0 - delta) / ((1.0 - delta) * n)
    bound = math.exp(-n * (divergence / (1.0 - delta) + eta)) if math.isfinite(divergence) else 0.0
    pc_actual = decoder_correct_probability(codebook, regions, channel, options)
    if pc_actual < bound * (1.0 - 1e-12):
        raise CertificateError(f"P_c = {pc_actual!r} falls below the log-sum bound {bound!r}.")
    return pc_actual, bound
