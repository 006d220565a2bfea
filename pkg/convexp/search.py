from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import Channel

RHO_CEILING = 1.0 - 1e-6


@dataclass
class SearchOptions:
    mu_points: int = 33
    rho_points: int = 65
    lambda_points: int = 33
    rho_max: float = 0.995
    # mu_max = mu_scale / gamma_max
    mu_scale: float = 50.0
    # smallest positive grid mu, relative to mu_max
    mu_floor: float = 1e-3
    resolution: float = 1e-10
    refine_rounds: int = 8
    threads: int = 1


@dataclass(frozen=True, eq=False)
class Candidate:
    """One evaluated parameter pair of an outer sup; ``payload`` holds the solver output behind ``value``."""

    first: float
    second: float
    value: float
    payload: Any = None


def mu_upper(channel: Channel, options: SearchOptions) -> float:
    if channel.gamma_max <= channel.gamma_0 or channel.gamma_max <= 0:
        return 0.0
    return options.mu_scale / channel.gamma_max


def mu_grid(channel: Channel, options: SearchOptions) -> np.ndarray:
    top = mu_upper(channel, options)
    if top == 0.0 or options.mu_points <= 1:
        if options.mu_points > 1:
            logging.warning("All input costs are equal; fixing mu = 0.")
        return np.zeros(1)
    return np.concatenate([[0.0], np.geomspace(top * options.mu_floor, top, options.mu_points - 1)])


def grid_sweep(
    evaluate_row: Callable[[float], List[Candidate]],
    firsts: Sequence[float],
    threads: int = 1,
) -> Tuple[Candidate, List[Candidate]]:
    """Evaluate a grid row by row and reduce to the lexicographically first maximum."""
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        rows = list(pool.map(evaluate_row, firsts))
    trace = [candidate for row in rows for candidate in row]
    best = trace[0]
    for candidate in trace[1:]:
        if candidate.value > best.value:
            best = candidate
    return best, trace


def _bracket(axis: np.ndarray, point: float) -> Tuple[float, float]:
    index = int(np.argmin(np.abs(axis - point)))
    return float(axis[max(index - 1, 0)]), float(axis[min(index + 1, len(axis) - 1)])


def _at_edge(x: float, bounds: Tuple[float, float]) -> bool:
    width = bounds[1] - bounds[0]
    return min(x - bounds[0], bounds[1] - x) <= 1e-6 * max(width, 1e-12)


def line_maximize(
    evaluate: Callable[[float], Candidate],
    axis: np.ndarray,
    start: Candidate,
    along_first: bool,
    resolution: float,
) -> Candidate:
    """Bounded golden-section/Brent search along one coordinate, seeded by the grid bracket around ``start``."""
    if len(axis) < 2:
        return start
    cache: Dict[float, Candidate] = {}

    def at(t: float) -> Candidate:
        if t not in cache:
            cache[t] = evaluate(t)
        return cache[t]

    best = start
    point = start.first if along_first else start.second
    full = (float(axis[0]), float(axis[-1]))
    for bounds in (_bracket(axis, point), full):
        if bounds[1] <= bounds[0]:
            continue
        result = minimize_scalar(lambda t: -at(float(t)).value, bounds=bounds, method="bounded",
                                 options={"xatol": resolution})
        candidate = at(float(result.x))
        if candidate.value > best.value:
            best = candidate
        if bounds == full or not _at_edge(float(result.x), bounds):
            break
    return best


def coordinate_refine(
    evaluate: Callable[[float, float], Candidate],
    best: Candidate,
    first_axis: np.ndarray,
    second_axis: np.ndarray,
    options: SearchOptions,
) -> Candidate:
    """Alternate line searches over the second and first coordinates until a round stops improving."""
    current = best
    for round_index in range(options.refine_rounds):
        before = current.value
        fixed = current
        current = line_maximize(lambda t: evaluate(fixed.first, t), second_axis, current, False, options.resolution)
        fixed = current
        current = line_maximize(lambda t: evaluate(t, fixed.second), first_axis, current, True, options.resolution)
        logging.debug(f"Refinement round {round_index}: value {current.value!r} at "
                      f"({current.first!r}, {current.second!r}).")
        if current.value - before <= 1e-14 * max(1.0, abs(before)):
            break
    return current
