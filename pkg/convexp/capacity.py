from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import rel_entr

from .channel import Channel, Distribution, mutual_information
from .errors import ConvergenceError, InfeasibleError
from .simplex import AscentOptions, multiplicative_ascent

COST_SLACK = 1e-12


@dataclass
class CapacityOptions:
    max_iterations: int = 10_000
    # inner stopping rule on (dual bound - primal)
    tolerance: float = 1e-10
    # certificate a successful capacity() must meet
    gap_tolerance: float = 1e-8
    bisection_tolerance: float = 1e-12
    max_bisection_steps: int = 200


@dataclass(frozen=True, eq=False)
class TiltedSolution:
    """Fixed point of the cost-tilted Blahut-Arimoto iteration for one multiplier.

    ``value`` is I(p, W) - mu E_p[c] at the returned input; ``upper`` is max_x [D(W(.|x)||q_Y) - mu c(x)], which
    bounds the optimum from above.
    """

    optimal_input: Distribution
    mu: float
    value: float
    upper: float
    iterations: int
    converged: bool

    @property
    def gap(self) -> float:
        return max(self.upper - self.value, 0.0)


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value: float
    optimal_input: Distribution
    lagrange_mu: float
    duality_gap: float
    iterations: int
    gamma: float


def _input_divergences(weights: np.ndarray, channel: Channel) -> np.ndarray:
    q_y = weights @ channel.transition
    return rel_entr(channel.transition, q_y[None, :]).sum(axis=1)


def blahut_arimoto(
    channel: Channel,
    mu: float = 0.0,
    initial: Optional[Distribution] = None,
    options: Optional[CapacityOptions] = None,
) -> TiltedSolution:
    """Maximize I(p, W) - mu E_p[c] with multiplicative updates p(x) <- p(x) exp(D(W(.|x)||q_Y) - mu c(x)).

    The updates run through ``multiplicative_ascent``, so dead symbols are revived and longer steps are tried. An
    unconverged run is logged at warning level and returned with ``converged=False``.
    """
    options = options or CapacityOptions()

    def oracle(log_r: np.ndarray) -> Tuple[float, np.ndarray]:
        r = np.exp(log_r)
        score = _input_divergences(r, channel) - mu * channel.cost
        lower = float(r @ score)
        return lower, score - lower

    ascent = AscentOptions(max_iterations=options.max_iterations, kkt_tolerance=options.tolerance)
    found = multiplicative_ascent(oracle, channel.input_size, 1.0, ascent,
                                  initial.weights if initial is not None else None,
                                  label=f"Blahut-Arimoto at mu={mu}", strict=False)
    r = found.weights
    score = _input_divergences(r, channel) - mu * channel.cost
    lower, upper = float(r @ score), float(score.max())
    converged = found.converged or upper - lower <= options.tolerance
    return TiltedSolution(Distribution.normalize(r), mu, lower, upper, found.iterations, converged)


def _tilted(channel: Channel, mu: float, options: CapacityOptions) -> TiltedSolution:
    # every multiplier starts cold; one longer retry, then give up
    solution = blahut_arimoto(channel, mu, options=options)
    if solution.converged:
        return solution
    longer = replace(options, max_iterations=10 * options.max_iterations)
    retry = blahut_arimoto(channel, mu, initial=solution.optimal_input, options=longer)
    if not retry.converged:
        raise ConvergenceError(f"Blahut-Arimoto at mu={mu} ended with gap {retry.gap:.3g} after "
                               f"{solution.iterations + retry.iterations} iterations.")
    return TiltedSolution(retry.optimal_input, mu, retry.value, retry.upper,
                          solution.iterations + retry.iterations, True)


def _dual_bound(weights: np.ndarray, channel: Channel, mu: float, gamma: float) -> float:
    return float(np.max(_input_divergences(weights, channel) - mu * (channel.cost - gamma)))


def capacity(channel: Channel, gamma: float, options: Optional[CapacityOptions] = None) -> CapacityResult:
    """C(gamma|W) = max over p with E_p[c] <= gamma of I(p, W), with a duality-gap certificate."""
    options = options or CapacityOptions()
    if gamma < channel.gamma_0 - COST_SLACK:
        raise InfeasibleError(f"Budget {gamma} is below the cheapest input cost {channel.gamma_0}.")

    if gamma <= channel.gamma_0 + COST_SLACK and channel.gamma_max > channel.gamma_0:
        # only the cheapest symbols are usable
        cheapest = channel.cost <= channel.gamma_0 + COST_SLACK
        solution = _tilted(channel.restrict_inputs(cheapest), 0.0, options)
        weights = np.zeros(channel.input_size)
        weights[cheapest] = solution.optimal_input.weights
        return _certified(CapacityResult(
            mutual_information(weights, channel), Distribution(weights), math.inf, solution.gap,
            solution.iterations, gamma,
        ), options)

    base = _tilted(channel, 0.0, options)
    if base.optimal_input.expectation(channel.cost) <= gamma + COST_SLACK:
        value = mutual_information(base.optimal_input, channel)
        gap = max(_dual_bound(base.optimal_input.weights, channel, 0.0, gamma) - value, 0.0)
        return _certified(CapacityResult(value, base.optimal_input, 0.0, gap, base.iterations, gamma), options)

    iterations = base.iterations
    low, high = base, _tilted(channel, 1.0, options)
    iterations += high.iterations
    while high.optimal_input.expectation(channel.cost) > gamma:
        if high.mu > 1e12:
            raise ConvergenceError(f"No multiplier up to {high.mu:.3g} meets budget {gamma}.")
        low = high
        high = _tilted(channel, 2.0 * high.mu, options)
        iterations += high.iterations

    for _ in range(options.max_bisection_steps):
        if high.mu - low.mu <= options.bisection_tolerance * max(1.0, high.mu):
            break
        middle = _tilted(channel, 0.5 * (low.mu + high.mu), options)
        iterations += middle.iterations
        if middle.optimal_input.expectation(channel.cost) > gamma:
            low = middle
        else:
            high = middle
    logging.debug(f"Capacity bisection for gamma={gamma} settled on mu in [{low.mu}, {high.mu}].")

    # mix the two bracketing optimizers so the budget is met with equality
    cost_low = low.optimal_input.expectation(channel.cost)
    cost_high = high.optimal_input.expectation(channel.cost)
    alpha = 0.0 if cost_low <= cost_high else min(max((gamma - cost_high) / (cost_low - cost_high), 0.0), 1.0)
    weights = alpha * low.optimal_input.weights + (1.0 - alpha) * high.optimal_input.weights
    mixed = Distribution.normalize(weights)
    value = mutual_information(mixed, channel)
    gap = max(_dual_bound(mixed.weights, channel, high.mu, gamma) - value, 0.0)
    return _certified(CapacityResult(value, mixed, high.mu, gap, iterations, gamma), options)


def _certified(result: CapacityResult, options: CapacityOptions) -> CapacityResult:
    if result.duality_gap > options.gap_tolerance:
        raise ConvergenceError(f"Capacity at gamma={result.gamma} ended with duality gap {result.duality_gap:.3g} "
                               f"after {result.iterations} iterations (tolerance {options.gap_tolerance:.3g}).")
    return result


def capacity_curve(
    channel: Channel,
    gammas: Sequence[float],
    options: Optional[CapacityOptions] = None,
    threads: int = 1,
) -> List[CapacityResult]:
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(lambda g: capacity(channel, g, options), gammas))
    ordered = sorted(results, key=lambda r: r.gamma)
    for before, after in zip(ordered, ordered[1:]):
        if after.value < before.value - 1e-9:
            logging.warning(f"Capacity decreased from {before.value} at gamma={before.gamma} "
                            f"to {after.value} at gamma={after.gamma}.")
    return results
