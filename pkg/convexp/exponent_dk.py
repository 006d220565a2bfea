from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, rel_entr

from .channel import (
    Channel,
    Distribution,
    JointDistribution,
    _check_joint,
    check_rho,
    conditional_divergence,
    joint_mutual_information,
)
from .errors import CertificateError, ConvergenceError, InfeasibleError, PreconditionError
from .exponent_oh import maximize_j
from .search import Candidate, SearchOptions, coordinate_refine, grid_sweep, line_maximize, mu_grid
from .simplex import LOG_FLOOR, ROUNDING, AscentOptions

COST_SLACK = 1e-12
FEASIBILITY_SLACK = 1e-9


@dataclass
class MirrorOptions:
    max_iterations: int = 50_000
    # Frank-Wolfe gap a minimizer must reach
    stationarity_tolerance: float = 1e-9
    initial_step: float = 1.0
    max_step: float = 1e4
    armijo: float = 0.5


@dataclass(frozen=True, eq=False)
class DkObjectiveEval:
    joint: JointDistribution
    # [R - I]^+ + D
    theta: float
    # gamma - E_q[c]
    cost_slack: float
    value: float


@dataclass(frozen=True, eq=False)
class DkReport:
    value: float
    best_joint: JointDistribution
    best_params: Tuple[float, float]
    stationarity_gap: float
    path: str = "parametric"
    iterations: int = 0
    direct_value: Optional[float] = None
    slackness: Optional[float] = None
    boundary_hit: bool = False
    grid_trace: List[Tuple[float, float, float]] = field(default_factory=list)

    @property
    def mu(self) -> float:
        return self.best_params[0]

    @property
    def lam(self) -> float:
        return self.best_params[1]


def _check_lambda(lam: float, mu: float):
    if not 0.0 <= lam <= 1.0:
        raise PreconditionError(f"lambda must lie in [0, 1]; got {lam}.")
    if not (math.isfinite(mu) and mu >= 0):
        raise PreconditionError(f"mu must be a finite nonnegative number; got {mu}.")


def dk_objective(
    q: JointDistribution,
    rate: float,
    gamma: float,
    channel: Channel,
    mu: float,
    lam: float,
) -> float:
    """lam [R - I(q_X, q_{Y|X})] - mu Gamma + mu E_q[c] + D(q_{Y|X} || W | q_X)."""
    _check_lambda(lam, mu)
    divergence = conditional_divergence(q, channel)
    if math.isinf(divergence):
        return math.inf
    information = joint_mutual_information(q)
    return lam * (rate - information) - mu * gamma + mu * q.expected_cost(channel) + divergence


def evaluate_dk(q: JointDistribution, rate: float, gamma: float, channel: Channel) -> DkObjectiveEval:
    """The constrained-form objective [R - I]^+ + D at q; ``value`` is +inf when q breaks the budget."""
    divergence = conditional_divergence(q, channel)
    theta = max(rate - joint_mutual_information(q), 0.0) + divergence
    slack = gamma - q.expected_cost(channel)
    return DkObjectiveEval(q, theta, slack, theta if slack >= -FEASIBILITY_SLACK else math.inf)


class _DkState:
    """Iterate of mirror descent, kept as log q_X and log q_{Y|X} on the support of W."""

    def __init__(self, channel: Channel, rate: float, gamma: float, mu: float, lam: float):
        self.mask = channel.support
        self.log_w = np.where(self.mask, channel.log_transition(), 0.0)
        self.cost = channel.cost
        self.constant = lam * rate - mu * gamma
        self.mu, self.lam = mu, lam

    def normalize_rows(self, log_cond: np.ndarray) -> np.ndarray:
        log_cond = np.where(self.mask, np.maximum(log_cond, LOG_FLOOR), -np.inf)
        return log_cond - logsumexp(log_cond, axis=1, keepdims=True)

    def evaluate(self, log_x: np.ndarray, log_cond: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        log_joint = log_x[:, None] + log_cond
        with np.errstate(divide="ignore"):
            log_y = logsumexp(log_joint, axis=0)
        filled_cond = np.where(self.mask, log_cond, 0.0)
        filled_y = np.where(np.isfinite(log_y), log_y, 0.0)
        gradient = np.where(
            self.mask,
            (1.0 - self.lam) * filled_cond + self.lam * filled_y[None, :] + self.mu * self.cost[:, None] - self.log_w,
            0.0,
        )
        joint = np.where(self.mask, np.exp(log_joint), 0.0)
        return self.constant + float((joint * gradient).sum()), gradient, joint

    def frank_wolfe_gap(self, gradient: np.ndarray, joint: np.ndarray) -> float:
        return float((joint * gradient).sum() - gradient[self.mask].min())

    def rounding(self, gradient: np.ndarray, joint: np.ndarray) -> float:
        # float resolution of the objective at this iterate
        return ROUNDING * (1.0 + abs(self.constant) + float(np.abs(joint * gradient).sum()))


def minimize_dk(
    rate: float,
    gamma: float,
    channel: Channel,
    mu: float,
    lam: float,
    options: Optional[MirrorOptions] = None,
    initial: Optional[JointDistribution] = None,
) -> DkReport:
    """Minimize dk_objective over joints supported on {W > 0} by entropic mirror descent.

    Steps are taken separately on q_X and on the rows of q_{Y|X}, with Armijo backtracking; the row step never
    exceeds 1/(1 - lam). Near the minimum the objective changes by less than its rounding, so a step that leaves
    the value unchanged to rounding is also kept when it does not widen the gap. ``stationarity_gap`` is the
    Frank-Wolfe gap, an upper bound on the suboptimality.
    """
    _check_lambda(lam, mu)
    options = options or MirrorOptions()
    state = _DkState(channel, rate, gamma, mu, lam)

    if initial is not None:
        _check_joint(initial, channel)
        with np.errstate(divide="ignore"):
            log_x = np.maximum(np.log(initial.weights.sum(axis=1)), LOG_FLOOR)
            log_cond = state.normalize_rows(np.log(np.maximum(initial.forward(), 0.0)))
    else:
        log_x = np.full(channel.input_size, -math.log(channel.input_size))
        log_cond = state.normalize_rows(state.log_w)
    log_x -= logsumexp(log_x)

    row_cap = math.inf if lam >= 1.0 else 1.0 / (1.0 - lam)
    value, gradient, joint = state.evaluate(log_x, log_cond)
    step = options.initial_step
    gap = state.frank_wolfe_gap(gradient, joint)
    iteration = 0
    for iteration in range(1, options.max_iterations + 1):
        if gap <= options.stationarity_tolerance:
            break

        cond = np.exp(log_cond)
        row_mean = np.where(state.mask, cond * gradient, 0.0).sum(axis=1)
        noise = state.rounding(gradient, joint)
        while True:
            trial_x = np.maximum(log_x - step * row_mean, LOG_FLOOR)
            trial_x -= logsumexp(trial_x)
            trial_cond = state.normalize_rows(log_cond - min(step, row_cap) * (gradient - row_mean[:, None]))
            trial_value, trial_gradient, trial_joint = state.evaluate(trial_x, trial_cond)
            trial_gap = state.frank_wolfe_gap(trial_gradient, trial_joint)
            decrease = float(((trial_joint - joint) * gradient).sum())
            if trial_value <= value + options.armijo * min(decrease, 0.0):
                break
            if trial_value <= value + noise and trial_gap <= gap:
                break
            step *= 0.5
            if step < 1e-14:
                step = options.initial_step
                break
        log_x, log_cond = trial_x, trial_cond
        value, gradient, joint, gap = trial_value, trial_gradient, trial_joint, trial_gap
        step = min(2.0 * step, options.max_step)

    if gap > options.stationarity_tolerance:
        raise ConvergenceError(f"Mirror descent at mu={mu}, lambda={lam} ended with Frank-Wolfe gap {gap:.3g} "
                               f"after {options.max_iterations} iterations.")

    logging.debug(f"minimize_dk(mu={mu}, lambda={lam}) = {value!r} after {iteration} iterations, gap {gap:.3g}.")
    return DkReport(value, JointDistribution.normalize(joint), (mu, lam), max(gap, 0.0), "parametric", iteration)


def _dk_candidate(report: DkReport) -> Candidate:
    return Candidate(report.mu, report.lam, report.value, report)


def g_dk_mu(
    rate: float,
    gamma: float,
    channel: Channel,
    mu: float,
    search: Optional[SearchOptions] = None,
    mirror: Optional[MirrorOptions] = None,
) -> DkReport:
    """The mu-parametric family: max over lambda in [0, 1] of minimize_dk."""
    search = search or SearchOptions()
    lams = np.linspace(0.0, 1.0, search.lambda_points)
    row = _sweep_lambda(rate, gamma, channel, mu, lams, mirror)
    best = row[0]
    for candidate in row[1:]:
        if candidate.value > best.value:
            best = candidate
    warm = best.payload.best_joint
    best = line_maximize(lambda t: _dk_candidate(minimize_dk(rate, gamma, channel, mu, t, mirror, warm)),
                         lams, best, False, search.resolution)
    return best.payload


def _sweep_lambda(rate: float, gamma: float, channel: Channel, mu: float, lams: np.ndarray,
                  mirror: Optional[MirrorOptions]) -> List[Candidate]:
    row = []
    warm = None
    for lam in lams:
        report = minimize_dk(rate, gamma, channel, mu, float(lam), mirror, warm)
        warm = report.best_joint
        row.append(_dk_candidate(report))
    return row


def g_dk(
    rate: float,
    gamma: float,
    channel: Channel,
    search: Optional[SearchOptions] = None,
    mirror: Optional[MirrorOptions] = None,
) -> DkReport:
    """G_DK = max over mu >= 0 and lambda in [0, 1] of the parametric minimum, with a direct-form cross-check."""
    search = search or SearchOptions()
    if gamma < channel.gamma_0 - COST_SLACK:
        raise InfeasibleError(f"Budget {gamma} is below the cheapest input cost {channel.gamma_0}.")

    mus = mu_grid(channel, search)
    lams = np.linspace(0.0, 1.0, search.lambda_points)
    best, trace = grid_sweep(lambda mu: _sweep_lambda(rate, gamma, channel, float(mu), lams, mirror), mus,
                             search.threads)

    def evaluate(mu: float, lam: float) -> Candidate:
        return _dk_candidate(minimize_dk(rate, gamma, channel, mu, lam, mirror, best.payload.best_joint))

    best = coordinate_refine(evaluate, best, mus, lams, search)
    report: DkReport = best.payload
    boundary_hit = len(mus) > 1 and report.mu >= mus[-1] * (1.0 - 1e-6)
    if boundary_hit:
        logging.warning(f"DK sup at R={rate}, gamma={gamma} sits on the mu boundary (mu={report.mu}).")

    joint = report.best_joint
    information = joint_mutual_information(joint)
    slackness = report.mu * (gamma - joint.expected_cost(channel))
    direct = evaluate_dk(joint, rate, gamma, channel)
    direct_value = direct.value if math.isfinite(direct.value) else None
    direct_certificate = abs(slackness) + abs(max(rate - information, 0.0) - report.lam * (rate - information))

    path, value = "parametric", report.value
    if direct_value is not None and direct_certificate < report.stationarity_gap:
        path, value = "direct", direct_value
    return DkReport(
        value=max(value, 0.0),
        best_joint=joint,
        best_params=report.best_params,
        stationarity_gap=report.stationarity_gap if path == "parametric" else direct_certificate,
        path=path,
        iterations=report.iterations,
        direct_value=direct_value,
        slackness=slackness,
        boundary_hit=boundary_hit,
        grid_trace=[(c.first, c.second, c.value) for c in trace],
    )


def decomposition_check(q: JointDistribution, channel: Channel, mu: float, rho: float) -> Tuple[float, float]:
    """Both sides of the divergence decomposition that ties the Dueck-Koerner and Arimoto forms together.

    lhs = rho [-I + mu E c] + D(q_{Y|X}||W|q_X)
    rhs = (1 - rho) D(q_{X|Y}||hat q_{X|Y}|q_Y) + D(q_Y||hat q_Y) - J(q_X)
    """
    if not 0.0 < rho < 1.0:
        raise PreconditionError(f"rho must lie in (0, 1); got {rho}.")
    _check_joint(q, channel)
    weights = q.weights
    if np.any(weights[~channel.support] > 0):
        raise PreconditionError("The joint puts mass where W(y|x) = 0.")

    lhs = rho * (-joint_mutual_information(q) + mu * q.expected_cost(channel)) + conditional_divergence(q, channel)

    q_x = weights.sum(axis=1)
    q_y = weights.sum(axis=0)
    reachable = q_y > 0
    tilted = np.where(channel.support,
                      np.exp((channel.log_transition() - mu * rho * channel.cost[:, None]) / (1.0 - rho)), 0.0)
    big_lambda = q_x @ tilted
    hat_backward = np.zeros_like(weights)
    np.divide(q_x[:, None] * tilted, big_lambda[None, :], out=hat_backward, where=big_lambda[None, :] > 0)
    powered = big_lambda ** (1.0 - rho)
    hat_output = powered / powered.sum()
    j_value = math.log(powered.sum())

    backward = q.backward()
    backward_divergence = float(rel_entr(backward, hat_backward)[:, reachable].sum(axis=0) @ q_y[reachable])
    output_divergence = float(rel_entr(q_y[reachable], hat_output[reachable]).sum())
    rhs = (1.0 - rho) * backward_divergence + output_divergence - j_value
    return float(lhs), float(rhs)


def backward_channel(
    q_input: Distribution,
    channel: Channel,
    mu: float,
    rho: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """V(y|x) = (W e^{-mu rho c})^{1/(1-rho)} Lambda(y)^{-rho} / sum_y Lambda(y)^{1-rho}, with its row sums."""
    if not 0.0 < rho < 1.0:
        raise PreconditionError(f"rho must lie in (0, 1); got {rho}.")
    shifted = channel.cost - channel.gamma_0
    log_a = np.where(channel.support, channel.log_transition() - mu * rho * shifted[:, None], -np.inf) / (1.0 - rho)
    with np.errstate(divide="ignore"):
        log_big = logsumexp(np.log(q_input.weights)[:, None] + log_a, axis=0)
    reachable = np.isfinite(log_big)
    log_norm = logsumexp((1.0 - rho) * log_big[reachable])
    conditional = np.zeros_like(channel.transition)
    conditional[:, reachable] = np.exp(log_a[:, reachable] - rho * log_big[None, reachable] - log_norm)
    return conditional, conditional.sum(axis=1)


def backward_optimizer(
    channel: Channel,
    mu: float,
    rho: float,
    options: Optional[AscentOptions] = None,
) -> JointDistribution:
    """q_X o V for the maximizer q_X of J; V is row-stochastic on the support exactly when the KKT conditions hold."""
    options = options or AscentOptions()
    check_rho(rho)
    found = maximize_j(channel, mu, rho, options)
    conditional, row_sums = backward_channel(found.optimal_input, channel, mu, rho)
    weights = found.optimal_input.weights
    support = found.optimal_input.support(options.support_threshold)
    deviation = max(float((weights[support] * np.abs(row_sums[support] - 1.0)).max()),
                    float((row_sums - 1.0).max()))
    if deviation > max(options.kkt_tolerance, 1e-12) * 10:
        raise CertificateError(f"Backward channel rows deviate from 1 by {deviation:.3g} on the input support.")
    return JointDistribution.normalize(found.optimal_input.weights[:, None] * conditional)
