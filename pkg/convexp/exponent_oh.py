from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .channel import Channel, Distribution, TiltParams, check_rho, _check_input, _check_output, _weights
from .errors import InfeasibleError, PreconditionError
from .search import RHO_CEILING, Candidate, SearchOptions, coordinate_refine, grid_sweep, line_maximize, mu_grid
from .simplex import AscentOptions, multiplicative_ascent

COST_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class OmegaEval:
    value: float
    q_input: Distribution
    q_output: Distribution
    params: TiltParams


class JMaximum(NamedTuple):
    optimal_input: Distribution
    value: float
    kkt_gap: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class ExponentReport:
    """Result of an outer sup over (mu, rho).

    ``rho = 1`` means the sup is the rho -> 1 limit; ``best_params.lam`` is then infinite. ``grid_trace`` holds
    ``(mu, rho, value)`` triples of the coarse grid.
    """

    value: float
    best_params: TiltParams
    best_input: Distribution
    kkt_gap: float
    grid_trace: List[Tuple[float, float, float]] = field(default_factory=list)
    boundary_hit: bool = False
    method: str = "oh"

    @property
    def rho(self) -> float:
        return self.best_params.rho


def _log_terms(channel: Channel) -> np.ndarray:
    return channel.log_transition()


def _positive_log(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def omega_pair(
    q_input: Union[Distribution, np.ndarray],
    q_output: Union[Distribution, np.ndarray],
    channel: Channel,
    params: TiltParams,
) -> float:
    """log sum_{x,y} q_X(x) W(y|x)^{1+lam} e^{-mu lam c(x)} Q(y)^{-lam}; +inf if Q misses a reachable output."""
    q, big_q = _weights(q_input), _weights(q_output)
    _check_input(q, channel)
    _check_output(big_q, channel)
    params.check_finite()
    if params.lam == 0:
        return 0.0

    active = (q[:, None] > 0) & channel.support
    if np.any(active & (big_q[None, :] == 0)):
        return math.inf
    lam, mu = params.lam, params.mu
    with np.errstate(invalid="ignore"):
        log_terms = (_positive_log(q)[:, None] + (1.0 + lam) * _log_terms(channel)
                     - mu * lam * channel.cost[:, None] - lam * _positive_log(big_q)[None, :])
    return float(logsumexp(log_terms[active]))


def evaluate_omega(q_input: Distribution, q_output: Distribution, channel: Channel, params: TiltParams) -> OmegaEval:
    return OmegaEval(omega_pair(q_input, q_output, channel, params), q_input, q_output, params)


def q_star(q_input: Union[Distribution, np.ndarray], channel: Channel, params: TiltParams) -> Distribution:
    """The output law minimizing omega_pair for a fixed input law."""
    q = _weights(q_input)
    _check_input(q, channel)
    params.check_finite()
    if params.lam <= 0:
        raise PreconditionError(f"q_star needs lambda > 0; got {params.lam}.")

    lam, mu = params.lam, params.mu
    with np.errstate(divide="ignore"):
        log_bracket = logsumexp(_positive_log(q)[:, None] + (1.0 + lam) * _log_terms(channel)
                                - mu * lam * channel.cost[:, None], axis=0)
    finite = np.isfinite(log_bracket)
    assert finite.any(), "q_X o W has empty support"
    scaled = np.where(finite, log_bracket / (1.0 + lam), -np.inf)
    return Distribution.normalize(np.exp(scaled - scaled[finite].max()))


class _TiltedTerms(NamedTuple):
    """log (W(y|x) e^{-mu rho (c(x) - gamma_0)})^{1/(1-rho)}, split as scaled + peaks / (1 - rho).

    ``peaks[y]`` is the column max of the unscaled exponent, so ``scaled <= 0`` and nothing overflows as rho -> 1.
    """

    scaled: np.ndarray
    peaks: np.ndarray
    rho: float

    @classmethod
    def of(cls, channel: Channel, mu: float, rho: float) -> _TiltedTerms:
        shifted = channel.cost - channel.gamma_0
        exponent = _log_terms(channel)[:, channel.reachable_outputs] - mu * rho * shifted[:, None]
        peaks = exponent.max(axis=0)
        return cls((exponent - peaks[None, :]) / (1.0 - rho), peaks, rho)

    def log_lambda(self, log_q: np.ndarray) -> np.ndarray:
        # log Lambda(y) less peaks / (1 - rho)
        with np.errstate(divide="ignore"):
            return logsumexp(log_q[:, None] + self.scaled, axis=0)

    def log_f(self, log_lambda: np.ndarray) -> float:
        finite = np.isfinite(log_lambda)
        return float(logsumexp(self.peaks[finite] + (1.0 - self.rho) * log_lambda[finite]))

    def log_ratio(self, log_lambda: np.ndarray, log_f: float) -> np.ndarray:
        """log of (d log F / d q_x) averaged to 1 under q; needs every reachable Lambda(y) > 0."""
        log_g = logsumexp(self.scaled + (self.peaks - self.rho * log_lambda)[None, :], axis=1)
        return log_g - log_f


def j_fun(q_input: Union[Distribution, np.ndarray], channel: Channel, mu: float, rho: float) -> float:
    """log sum_y [sum_x q_X(x) (W(y|x) e^{-mu rho c(x)})^{1/(1-rho)}]^{1-rho}."""
    check_rho(rho)
    q = _weights(q_input)
    _check_input(q, channel)
    if rho == 0:
        return 0.0
    terms = _TiltedTerms.of(channel, mu, rho)
    return terms.log_f(terms.log_lambda(_positive_log(q))) - mu * rho * channel.gamma_0


def maximize_j(
    channel: Channel,
    mu: float,
    rho: float,
    options: Optional[AscentOptions] = None,
    initial: Optional[Distribution] = None,
) -> JMaximum:
    """Maximize J over input laws; the KKT gap is reported relative to sum_y Lambda(y)^{1-rho}."""
    check_rho(rho)
    if mu < 0:
        raise PreconditionError(f"mu must be nonnegative; got {mu}.")
    if rho == 0:
        return JMaximum(Distribution.uniform(channel.input_size), 0.0, 0.0, 0)

    terms = _TiltedTerms.of(channel, mu, rho)

    def oracle(log_q: np.ndarray) -> Tuple[float, np.ndarray]:
        log_lambda = terms.log_lambda(log_q)
        log_f = terms.log_f(log_lambda)
        return log_f, terms.log_ratio(log_lambda, log_f)

    result = multiplicative_ascent(oracle, channel.input_size, 1.0 / rho, options,
                                   initial.weights if initial is not None else None, label=f"max J(mu={mu}, rho={rho})")
    value = result.value - mu * rho * channel.gamma_0
    return JMaximum(Distribution.normalize(result.weights), value, result.kkt_gap, result.iterations)


class OmegaMaximum(NamedTuple):
    optimal_input: Distribution
    optimal_output: Distribution
    value: float
    kkt_gap: float
    iterations: int = 0


def omega_max(
    channel: Channel,
    params: TiltParams,
    options: Optional[AscentOptions] = None,
    initial: Optional[Distribution] = None,
) -> OmegaMaximum:
    """Omega(W) = max over q_X of min over Q of omega_pair, through q_star and omega_pair only."""
    params.check_finite()
    if params.lam == 0:
        uniform = Distribution.uniform(channel.input_size)
        return OmegaMaximum(uniform, Distribution.normalize(uniform.weights @ channel.transition), 0.0, 0.0, 0)

    lam, mu = params.lam, params.mu
    # min over Q of omega_pair is (1 + lam) J at rho = lam / (1 + lam), so both share the ascent direction
    terms = _TiltedTerms.of(channel, mu, lam / (1.0 + lam))

    def oracle(log_q: np.ndarray) -> Tuple[float, np.ndarray]:
        q = Distribution.normalize(np.exp(log_q))
        value = omega_pair(q, q_star(q, channel, params), channel, params)
        log_lambda = terms.log_lambda(log_q)
        return value, terms.log_ratio(log_lambda, terms.log_f(log_lambda))

    result = multiplicative_ascent(oracle, channel.input_size, (1.0 + lam) / lam, options,
                                   initial.weights if initial is not None else None,
                                   label=f"max Omega(mu={mu}, lambda={lam})")
    q = Distribution.normalize(result.weights)
    return OmegaMaximum(q, q_star(q, channel, params), result.value, result.kkt_gap, result.iterations)


def g_ar_point(
    rate: float,
    gamma: float,
    channel: Channel,
    mu: float,
    rho: float,
    options: Optional[AscentOptions] = None,
) -> float:
    check_rho(rho)
    if rho == 0:
        return 0.0
    return rho * (rate - mu * gamma) - maximize_j(channel, mu, rho, options).value


def g_ar_limit(rate: float, gamma: float, channel: Channel, mu: float) -> float:
    """The rho -> 1 limit of the Arimoto form: R - mu Gamma - log sum_y max_x W(y|x) e^{-mu c(x)}."""
    log_a = _log_terms(channel) - mu * channel.cost[:, None]
    peaks = log_a.max(axis=0)
    return rate - mu * gamma - float(logsumexp(peaks[np.isfinite(peaks)]))


def g_oh_point(
    rate: float,
    gamma: float,
    channel: Channel,
    params: TiltParams,
    options: Optional[AscentOptions] = None,
) -> float:
    params.check_finite()
    if params.lam == 0:
        return 0.0
    lam = params.lam
    return (lam * (rate - params.mu * gamma) - omega_max(channel, params, options).value) / (1.0 + lam)


def _evaluate(method: str, rate: float, gamma: float, channel: Channel, mu: float, rho: float,
              options: Optional[AscentOptions]) -> Candidate:
    if rho == 0:
        return Candidate(mu, rho, 0.0, (Distribution.uniform(channel.input_size), 0.0))
    if method == "ar":
        found = maximize_j(channel, mu, rho, options)
        value = rho * (rate - mu * gamma) - found.value
        return Candidate(mu, rho, value, (found.optimal_input, found.kkt_gap))
    params = TiltParams.from_rho(mu, rho)
    found = omega_max(channel, params, options)
    value = (params.lam * (rate - mu * gamma) - found.value) / (1.0 + params.lam)
    return Candidate(mu, rho, value, (found.optimal_input, found.kkt_gap))


def _sup(
    method: str,
    rate: float,
    gamma: float,
    channel: Channel,
    search: Optional[SearchOptions],
    ascent: Optional[AscentOptions],
) -> ExponentReport:
    search = search or SearchOptions()
    if gamma < channel.gamma_0 - COST_SLACK:
        raise InfeasibleError(f"Budget {gamma} is below the cheapest input cost {channel.gamma_0}.")

    mus = mu_grid(channel, search)
    rhos = np.linspace(0.0, search.rho_max, search.rho_points)

    def evaluate(mu: float, rho: float) -> Candidate:
        return _evaluate(method, rate, gamma, channel, mu, rho, ascent)

    best, trace = grid_sweep(lambda mu: [evaluate(mu, rho) for rho in rhos], mus, search.threads)
    best = coordinate_refine(evaluate, best, mus, np.append(rhos, RHO_CEILING), search)

    # the rho -> 1 endpoint, concave in mu
    endpoint_grid = [Candidate(mu, 1.0, g_ar_limit(rate, gamma, channel, mu)) for mu in mus]
    endpoint = max(endpoint_grid, key=lambda c: c.value)
    endpoint = line_maximize(lambda mu: Candidate(mu, 1.0, g_ar_limit(rate, gamma, channel, mu)), mus, endpoint,
                             True, search.resolution)

    boundary_hit = False
    if endpoint.value > best.value:
        best = Candidate(endpoint.first, 1.0, endpoint.value, (Distribution.uniform(channel.input_size), 0.0))
        boundary_hit = True
    if len(mus) > 1 and best.first >= mus[-1] * (1.0 - 1e-6):
        boundary_hit = True
    if boundary_hit:
        logging.warning(f"{method.upper()} sup at R={rate}, gamma={gamma} sits on the search boundary "
                        f"(mu={best.first}, rho={best.second}).")

    value = max(best.value, 0.0)
    if gamma > channel.gamma_0 + COST_SLACK:
        assert value <= rate + 1e-9 or rate < 0, f"exponent {value} exceeds the rate {rate}"
    best_input, gap = best.payload
    return ExponentReport(
        value=value,
        best_params=TiltParams.from_rho(best.first, best.second),
        best_input=best_input,
        kkt_gap=gap,
        grid_trace=[(c.first, c.second, c.value) for c in trace],
        boundary_hit=boundary_hit,
        method=method,
    )


def g_oh_sup(
    rate: float,
    gamma: float,
    channel: Channel,
    search: Optional[SearchOptions] = None,
    ascent: Optional[AscentOptions] = None,
) -> ExponentReport:
    """sup over mu >= 0, lambda >= 0 of the information-spectrum form, swept in rho = lambda/(1+lambda)."""
    return _sup("oh", rate, gamma, channel, search, ascent)


def g_ar_sup(
    rate: float,
    gamma: float,
    channel: Channel,
    search: Optional[SearchOptions] = None,
    ascent: Optional[AscentOptions] = None,
) -> ExponentReport:
    return _sup("ar", rate, gamma, channel, search, ascent)
