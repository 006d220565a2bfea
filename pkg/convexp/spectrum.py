from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from .channel import Channel, Distribution, TiltParams, _weights
from .errors import BudgetExceededError, CertificateError, DimensionError, PreconditionError
from .exponent_oh import g_oh_point, omega_max, omega_pair, q_star
from .oracle import Codebook, OracleOptions, decoder_correct_probability, likelihoods, map_correct_probability
from .simplex import AscentOptions

ROW_TOLERANCE = 1e-9
CAP_SLACK = 1e-9
# replaces a non-positive balancing eta
ETA_FLOOR = 1e-6


@dataclass
class SpectrumOptions:
    # cap on |X|^n |Y|^n for dense tilted laws
    enumeration_budget: int = 10**6


@dataclass(frozen=True, eq=False)
class InputProcess:
    """Input law p(x^n) = prod_t p(x_t | x^{t-1}).

    ``conditionals[t]`` has shape (|X|^t, |X|); row ``i`` is the law of x_{t+1} after the prefix with lexicographic
    index ``i``.
    """

    conditionals: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.conditionals:
            raise PreconditionError("An input process needs a horizon of at least 1.")
        size = self.conditionals[0].shape[1]
        for t, table in enumerate(self.conditionals):
            if table.shape != (size ** t, size):
                raise DimensionError(f"Step {t + 1} table has shape {table.shape}; expected {(size ** t, size)}.")
            if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_TOLERANCE):
                raise PreconditionError(f"Step {t + 1} conditional rows are not probability vectors.")

    @property
    def horizon(self) -> int:
        return len(self.conditionals)

    @property
    def input_size(self) -> int:
        return self.conditionals[0].shape[1]

    @classmethod
    def iid(cls, dist: Union[Distribution, ArrayLike], n: int) -> InputProcess:
        row = _weights(dist)
        return cls(tuple(np.tile(row, (row.size ** t, 1)) for t in range(n)))

    @classmethod
    def random(cls, rng: np.random.Generator, input_size: int, n: int) -> InputProcess:
        return cls(tuple(rng.dirichlet(np.ones(input_size), size=input_size ** t) for t in range(n)))

    @classmethod
    def from_codebook(cls, codebook: Codebook, input_size: int) -> InputProcess:
        """Uniform law over the codewords; prefixes of probability zero continue uniformly."""
        law = np.zeros((input_size,) * codebook.n)
        for word in codebook.words:
            law[word] += 1.0 / codebook.size
        tables = []
        for t in range(codebook.n):
            prefix = law.sum(axis=tuple(range(t + 1, codebook.n))).reshape(input_size ** t, input_size)
            totals = prefix.sum(axis=1, keepdims=True)
            table = np.full_like(prefix, 1.0 / input_size)
            np.divide(prefix, totals, out=table, where=totals > 0)
            tables.append(table)
        return cls(tuple(tables))

    def joint(self) -> np.ndarray:
        """p(x^n) as a flat vector in lexicographic order."""
        law = self.conditionals[0][0]
        for table in self.conditionals[1:]:
            law = (law[:, None] * table).reshape(-1)
        return law


@dataclass(frozen=True, eq=False)
class OutputSequenceLaw:
    """A law on Y^n, either a product of per-step laws ``steps`` or a dense ``table`` over Y^n."""

    horizon: int
    steps: Optional[Tuple[np.ndarray, ...]] = None
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        assert (self.steps is None) != (self.table is None), "exactly one of steps and table must be given"
        for law in self.steps or (self.table,):
            if np.any(law < 0) or abs(law.sum() - 1.0) > ROW_TOLERANCE:
                raise PreconditionError("Output laws must be probability vectors.")

    @classmethod
    def product(cls, laws: Sequence[Union[Distribution, ArrayLike]]) -> OutputSequenceLaw:
        return cls(len(laws), steps=tuple(_weights(law) for law in laws))

    @classmethod
    def iid(cls, law: Union[Distribution, ArrayLike], n: int) -> OutputSequenceLaw:
        return cls.product([law] * n)

    @classmethod
    def full(cls, table: ArrayLike, horizon: int) -> OutputSequenceLaw:
        return cls(horizon, table=np.asarray(table, dtype=float).reshape(-1))

    @property
    def is_product(self) -> bool:
        return self.steps is not None

    def probability_table(self) -> np.ndarray:
        if self.table is not None:
            return self.table
        law = self.steps[0]
        for step in self.steps[1:]:
            law = np.kron(law, step)
        return law


@dataclass(frozen=True, eq=False)
class TiltState:
    """Tilted joint law over X^t x Y^t after t steps with log C_0..log C_t and the step factors log Phi_1..log Phi_t."""

    tilted: np.ndarray
    log_constants: List[float]
    log_phi: List[float]

    @property
    def omega(self) -> float:
        return self.log_constants[-1]


@dataclass(frozen=True, eq=False)
class PotentialTrace:
    per_step: List[float]
    cap: float
    outputs: OutputSequenceLaw
    holds: bool
    state: Optional[TiltState] = None
    checks: List[bool] = field(default_factory=list)


def _check_process(process: InputProcess, channel: Channel, options: SpectrumOptions):
    if process.input_size != channel.input_size:
        raise DimensionError(f"Process has {process.input_size} input letters; channel has {channel.input_size}.")
    size = (channel.input_size * channel.output_size) ** process.horizon
    if size > options.enumeration_budget:
        raise BudgetExceededError(f"|X|^n |Y|^n = {size} exceeds the enumeration budget "
                                  f"{options.enumeration_budget}.")


def _check_outputs(outputs: OutputSequenceLaw, process: InputProcess, channel: Channel):
    if outputs.horizon != process.horizon:
        raise DimensionError(f"Output law has horizon {outputs.horizon}; process has {process.horizon}.")
    expected = channel.output_size ** outputs.horizon
    if outputs.probability_table().size != expected:
        raise DimensionError(f"Output law covers {outputs.probability_table().size} sequences; expected {expected}.")


def _kernel(channel: Channel, law: np.ndarray, params: TiltParams) -> np.ndarray:
    """W(y|x) f(x, y) = W^{1+lam} e^{-mu lam c} Q^{-lam}; +inf where Q(y) = 0 < W(y|x)."""
    lam, mu = params.lam, params.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = channel.transition ** (1.0 + lam) * np.exp(-mu * lam * channel.cost)[:, None]
        kernel = scaled / law[None, :] ** lam
    return np.where(channel.support, kernel, 0.0)


def tilt_step(state: TiltState, table: np.ndarray, channel: Channel, law: np.ndarray,
              params: TiltParams) -> TiltState:
    kernel = _kernel(channel, law, params)
    rows, cols = state.tilted.shape
    with np.errstate(invalid="ignore"):
        grown = state.tilted[:, None, :, None] * table[:, :, None, None] * kernel[None, :, None, :]
    grown = np.nan_to_num(grown, nan=0.0, posinf=np.inf)
    grown = grown.reshape(rows * channel.input_size, cols * channel.output_size)
    phi = float(grown.sum())
    log_phi = math.log(phi) if phi > 0 else -math.inf
    tilted = grown / phi if math.isfinite(phi) and phi > 0 else grown
    return TiltState(tilted, state.log_constants + [state.log_constants[-1] + log_phi], state.log_phi + [log_phi])


def next_input_law(state: TiltState, table: np.ndarray) -> np.ndarray:
    """p_{X_t; Q^{t-1}}: the tilted law of the next input letter."""
    return state.tilted.sum(axis=1) @ table


def tilt_recursion(
    process: InputProcess,
    outputs: OutputSequenceLaw,
    channel: Channel,
    params: TiltParams,
    options: Optional[SpectrumOptions] = None,
) -> TiltState:
    """Run the step-normalized tilt; sum_t log Phi_t equals the n-letter Omega(p^(n), Q^n).

    A zero Q_t on the reachable tilted support makes that Phi_t, and every later constant, +inf.
    """
    options = options or SpectrumOptions()
    params.check_finite()
    _check_process(process, channel, options)
    _check_outputs(outputs, process, channel)
    if not outputs.is_product:
        raise PreconditionError("The tilt recursion needs a product output law.")

    state = TiltState(np.ones((1, 1)), [0.0], [])
    for t, (table, law) in enumerate(zip(process.conditionals, outputs.steps)):
        state = tilt_step(state, table, channel, law, params)
        if not math.isfinite(state.log_phi[-1]):
            logging.debug(f"Phi_{t + 1} is {state.log_phi[-1]}; stopping the recursion.")
            pad = [math.inf] * (process.horizon - t - 1)
            return TiltState(state.tilted, state.log_constants + pad, state.log_phi + pad)
    return state


def omega_direct(
    process: InputProcess,
    outputs: OutputSequenceLaw,
    channel: Channel,
    params: TiltParams,
    options: Optional[SpectrumOptions] = None,
) -> float:
    """log E_{p^(n)}[prod_t W^lam e^{-mu lam c} Q^{-lam}] by enumeration over (x^n, y^n); any law on Y^n is allowed."""
    options = options or SpectrumOptions()
    params.check_finite()
    _check_process(process, channel, options)
    _check_outputs(outputs, process, channel)
    if params.lam == 0:
        return 0.0

    n = process.horizon
    words = list(np.ndindex(*(channel.input_size,) * n))
    p = process.joint()
    used = p > 0
    lam, mu = params.lam, params.mu
    table = likelihoods([words[i] for i in np.flatnonzero(used)], channel,
                        OracleOptions(output_budget=options.enumeration_budget))
    costs = channel.cost[np.array(words)[used]].sum(axis=1)
    law = outputs.probability_table()
    active = table > 0
    if np.any(active & (law[None, :] == 0)):
        return math.inf
    with np.errstate(divide="ignore"):
        log_terms = (np.log(p[used])[:, None] + (1.0 + lam) * np.log(table) - mu * lam * costs[:, None]
                     - lam * np.log(law)[None, :])
    return float(logsumexp(log_terms[active]))


def greedy_potential_bound(
    process: InputProcess,
    channel: Channel,
    params: TiltParams,
    options: Optional[SpectrumOptions] = None,
    ascent: Optional[AscentOptions] = None,
) -> PotentialTrace:
    """Pick Q_t = q_star of the tilted input law at every step and check log Phi_t <= Omega(W)."""
    options = options or SpectrumOptions()
    params.check_finite()
    _check_process(process, channel, options)

    state = TiltState(np.ones((1, 1)), [0.0], [])
    laws = []
    for table in process.conditionals:
        marginal = next_input_law(state, table)
        if params.lam > 0:
            law = q_star(Distribution.normalize(marginal), channel, params).weights
        else:
            law = marginal @ channel.transition
        laws.append(law)
        state = tilt_step(state, table, channel, law, params)

    found = omega_max(channel, params, ascent)
    cap = found.value
    slack = CAP_SLACK + math.log1p(found.kkt_gap)
    checks = [value <= cap + slack for value in state.log_phi]
    if not all(checks):
        logging.warning(f"Per-step potentials {state.log_phi} exceed the cap {cap!r}.")
    return PotentialTrace(state.log_phi, cap, OutputSequenceLaw.product(laws), all(checks), state, checks)


def balancing_eta(rate: float, gamma: float, omega_n: float, n: int, params: TiltParams) -> float:
    """eta equating the Cramer term and the e^{-n eta} slack: [lam(R - mu Gamma) - Omega_n/n] / (1 + lam)."""
    params.check_finite()
    eta = (params.lam * (rate - params.mu * gamma) - omega_n / n) / (1.0 + params.lam)
    if not eta > 0:
        logging.warning(f"Balancing eta {eta!r} is not positive; using {ETA_FLOOR}.")
        return ETA_FLOOR
    return eta


def one_shot_bound(
    codebook: Codebook,
    regions: np.ndarray,
    channel: Channel,
    outputs: OutputSequenceLaw,
    eta: Optional[float] = None,
    params: Optional[TiltParams] = None,
    gamma: Optional[float] = None,
    options: Optional[SpectrumOptions] = None,
) -> Tuple[float, float]:
    """Exact P_c of a decoder against Pr{(1/n) log M <= (1/n) log W^n/Q + eta, cost <= Gamma} + e^{-n eta}.

    X^n is uniform over the codewords. Without ``eta`` the balancing choice for ``params`` is used.
    """
    options = options or SpectrumOptions()
    n = codebook.n
    budget = OracleOptions(output_budget=options.enumeration_budget)
    law = outputs.probability_table()
    if outputs.horizon != n or law.size != channel.output_size ** n:
        raise DimensionError(f"Output law does not cover Y^{n}.")
    gamma = float(codebook.average_costs(channel).max()) if gamma is None else gamma
    if eta is None:
        if params is None:
            raise PreconditionError("Either eta or tilt parameters are needed.")
        process = InputProcess.from_codebook(codebook, channel.input_size)
        omega_n = omega_direct(process, outputs, channel, params, options)
        eta = balancing_eta(codebook.rate, gamma, omega_n, n, params)
    if not eta > 0:
        raise PreconditionError(f"eta must be positive; got {eta}.")

    pc_exact = decoder_correct_probability(codebook, regions, channel, budget)
    table = likelihoods(codebook.words, channel, budget)
    feasible = codebook.average_costs(channel) <= gamma + 1e-12
    with np.errstate(divide="ignore"):
        log_ratio = np.log(table) - np.log(law)[None, :]
    threshold = math.log(codebook.size) - n * eta
    inside = (table > 0) & (log_ratio >= threshold) & feasible[:, None]
    spectrum = float(table[inside].sum() / codebook.size)
    bound = spectrum + math.exp(-n * eta)
    if pc_exact > bound * (1.0 + 1e-12):
        raise CertificateError(f"P_c = {pc_exact!r} exceeds the one-shot bound {bound!r}.")
    return pc_exact, bound


def cramer_bound(values: ArrayLike, probabilities: ArrayLike, a: float, theta: float) -> Tuple[float, float]:
    """Pr{Z >= a} and exp(-(theta a - log E e^{theta Z})) for a finitely supported Z."""
    if not theta > 0:
        raise PreconditionError(f"theta must be positive; got {theta}.")
    values = np.asarray(values, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    if values.shape != probabilities.shape:
        raise DimensionError("values and probabilities differ in shape.")
    prob = float(probabilities[values >= a].sum())
    positive = probabilities > 0
    log_moment = float(logsumexp(theta * values[positive] + np.log(probabilities[positive])))
    bound = math.exp(min(-(theta * a - log_moment), 700.0))
    if prob > bound * (1.0 + 1e-12):
        raise CertificateError(f"Pr{{Z >= {a}}} = {prob!r} exceeds the Cramer bound {bound!r}.")
    return prob, bound


def correct_probability_bound(
    codebook: Codebook,
    channel: Channel,
    params: TiltParams,
    outputs: Optional[OutputSequenceLaw] = None,
    gamma: Optional[float] = None,
    options: Optional[SpectrumOptions] = None,
) -> Tuple[float, float]:
    """MAP P_c of a code against 2 exp{-n[lam(R - mu Gamma) - Omega(p^(n), Q^n)/n] / (1 + lam)}, R = (1/n) log M.

    p^(n) is uniform over the codewords; Q^n defaults to the greedy per-step choice.
    """
    options = options or SpectrumOptions()
    params.check_finite()
    if params.lam <= 0:
        raise PreconditionError(f"The bound needs lambda > 0; got {params.lam}.")
    n = codebook.n
    process = InputProcess.from_codebook(codebook, channel.input_size)
    if outputs is None:
        outputs = greedy_potential_bound(process, channel, params, options).outputs
    gamma = float(codebook.average_costs(channel).max()) if gamma is None else gamma

    omega_n = omega_direct(process, outputs, channel, params, options)
    lam = params.lam
    exponent = n * (lam * (codebook.rate - params.mu * gamma) - omega_n / n) / (1.0 + lam)
    bound = 2.0 * math.exp(min(-exponent, 700.0))
    pc = map_correct_probability(codebook, channel, OracleOptions(output_budget=options.enumeration_budget))
    if pc > bound * (1.0 + 1e-12):
        raise CertificateError(f"P_c = {pc!r} exceeds the tilted bound {bound!r}.")
    return pc, bound


def exponent_lower_bound(
    rate: float,
    gamma: float,
    channel: Channel,
    params: TiltParams,
    n: int,
    ascent: Optional[AscentOptions] = None,
) -> float:
    """Finite-n exponent bound [lam(R - mu Gamma) - Omega(W)]/(1 + lam) - (log 2)/n."""
    params.check_finite()
    if params.lam <= 0:
        raise PreconditionError(f"The bound needs lambda > 0; got {params.lam}.")
    if n < 1:
        raise PreconditionError(f"n must be positive; got {n}.")
    return g_oh_point(rate, gamma, channel, params, ascent) - math.log(2.0) / n


def step_omegas(process: InputProcess, outputs: OutputSequenceLaw, channel: Channel,
                params: TiltParams) -> List[float]:
    """omega_pair of the tilted input law and Q_t at every step; matches tilt_recursion's log Phi_t."""
    state = TiltState(np.ones((1, 1)), [0.0], [])
    values = []
    for table, law in zip(process.conditionals, outputs.steps):
        marginal = next_input_law(state, table)
        values.append(omega_pair(Distribution.normalize(marginal), law, channel, params))
        state = tilt_step(state, table, channel, law, params)
    return values
