from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError

LOG_FLOOR = -700.0
# coordinates below this log-mass are treated as removed from the support
DEAD_LOG = LOG_FLOOR + 50.0
ROUNDING = 64.0 * float(np.finfo(float).eps)

# maps log q to (objective, log of the normalized gradient ratio)
RatioOracle = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class AscentOptions:
    max_iterations: int = 20_000
    kkt_tolerance: float = 1e-9
    # inputs below this mass count as off-support in the KKT check
    support_threshold: float = 1e-9
    # cap on the step exponent, as a multiple of the natural one
    max_step_factor: float = 64.0
    # off-support inputs with ratio < 1 are dropped once their mass falls below this
    prune_threshold: float = 1e-12
    # mass given back to a dropped input whose ratio climbs above 1
    reinject_mass: float = 1e-4


@dataclass(frozen=True, eq=False)
class AscentResult:
    weights: np.ndarray
    value: float
    kkt_gap: float
    iterations: int
    converged: bool = True


def kkt_gap(weights: np.ndarray, log_ratio: np.ndarray, support_threshold: float) -> float:
    """KKT residual of a concave maximization over the simplex.

    ``exp(log_ratio)`` is the gradient divided by its q-average, so optimality means ratio <= 1 everywhere and
    ratio = 1 on the support. The residual is the largest excess above 1 plus the largest complementarity violation
    q(x) |ratio(x) - 1| on the support; an input on its way out of the support with ratio just below 1 counts by its
    mass. The excess alone bounds the suboptimality: log F* - log F <= log(1 + excess).
    """
    ratio = np.exp(log_ratio)
    above = max(float((ratio - 1.0).max()), 0.0)
    on = weights > support_threshold
    equality = float((weights[on] * np.abs(ratio[on] - 1.0)).max()) if on.any() else 0.0
    return above + equality


def _normalized(log_q: np.ndarray) -> np.ndarray:
    log_q = np.maximum(log_q, LOG_FLOOR)
    return log_q - logsumexp(log_q)


def _log_start(size: int, initial: Optional[np.ndarray]) -> np.ndarray:
    start = initial if initial is not None else np.full(size, 1.0 / size)
    with np.errstate(divide="ignore"):
        return _normalized(np.log(start))


def multiplicative_ascent(
    oracle: RatioOracle,
    size: int,
    exponent: float,
    options: Optional[AscentOptions] = None,
    initial: Optional[np.ndarray] = None,
    label: str = "ascent",
    strict: bool = True,
) -> AscentResult:
    """Maximize a concave function on the simplex with updates q <- q * ratio^s.

    ``s = exponent`` is the natural fixed-point step and never decreases the objective. Longer steps, up to
    ``exponent * options.max_step_factor``, are tried first and kept when they raise the objective, or when the
    objective is unchanged to rounding and the KKT residual does not grow. Inputs that fade below
    ``prune_threshold`` with ratio < 1 are dropped, and dropped inputs whose ratio exceeds 1 get mass back.

    With ``strict`` a residual above tolerance raises ``ConvergenceError``; otherwise the last iterate is returned
    with ``converged=False``.
    """
    options = options or AscentOptions()
    log_q = _log_start(size, initial)
    value, log_ratio = oracle(log_q)
    gap = kkt_gap(np.exp(log_q), log_ratio, options.support_threshold)

    step = exponent
    max_step = exponent * options.max_step_factor
    reinjections = 0
    iteration = 0
    for iteration in range(1, options.max_iterations + 1):
        if gap <= options.kkt_tolerance:
            break

        revive = (log_q <= DEAD_LOG) & (log_ratio > np.log1p(options.kkt_tolerance))
        if revive.any() and reinjections < 4 * size:
            reinjections += 1
            weights = np.exp(log_q) * (1.0 - options.reinject_mass * revive.sum())
            weights[revive] = options.reinject_mass
            log_q = _normalized(np.log(weights))
            value, log_ratio = oracle(log_q)
            gap = kkt_gap(np.exp(log_q), log_ratio, options.support_threshold)
            step = exponent
            continue

        candidate = _normalized(log_q + step * log_ratio)
        candidate_value, candidate_ratio = oracle(candidate)
        candidate_gap = kkt_gap(np.exp(candidate), candidate_ratio, options.support_threshold)
        noise = ROUNDING * max(1.0, abs(value))
        rises = candidate_value > value + noise
        holds = candidate_value >= value - noise and candidate_gap <= gap
        if step > exponent and not (rises or holds):
            step = exponent
            candidate = _normalized(log_q + step * log_ratio)
            candidate_value, candidate_ratio = oracle(candidate)
            candidate_gap = kkt_gap(np.exp(candidate), candidate_ratio, options.support_threshold)
        log_q, value, log_ratio, gap = candidate, candidate_value, candidate_ratio, candidate_gap
        step = min(2.0 * step, max_step)

        fading = (log_q > DEAD_LOG) & (log_q < np.log(options.prune_threshold)) & (log_ratio < 0)
        if fading.any() and reinjections < 4 * size:
            log_q = _normalized(np.where(fading, LOG_FLOOR, log_q))
            value, log_ratio = oracle(log_q)
            gap = kkt_gap(np.exp(log_q), log_ratio, options.support_threshold)

    converged = gap <= options.kkt_tolerance
    if not converged:
        message = (f"{label} did not reach KKT gap {options.kkt_tolerance:.3g} in {options.max_iterations} "
                   f"iterations (gap {gap:.3g}).")
        if strict:
            logging.debug(f"{label} stopped at value {value!r}.")
            raise ConvergenceError(message)
        logging.warning(message)
    return AscentResult(np.exp(log_q), value, gap, iteration, converged)
