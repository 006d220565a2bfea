"""Randomized cross-checks of the exponent formulas, the information-spectrum bounds and the code oracle.

Every check draws its instances from one seeded generator, so a given (seed, scale) always runs the same
instances. A check counts violations instead of stopping at the first one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .capacity import CapacityOptions, capacity
from .channel import Channel, Distribution, JointDistribution, TiltParams, random_channel
from .errors import ConvexpError, InfeasibleError
from .exponent_dk import MirrorOptions, backward_optimizer, decomposition_check, g_dk, minimize_dk
from .exponent_oh import g_ar_point, g_ar_sup, g_oh_point, g_oh_sup, j_fun, maximize_j, omega_pair, q_star
from .oracle import (
    Codebook,
    OracleOptions,
    brute_force_gn,
    constant_composition_divergence,
    decoder_correct_probability,
    feasible_words,
    log_sum_lower_bound,
    map_correct_probability,
    map_decoder,
    subadditivity_check,
)
from .search import SearchOptions
from .simplex import AscentOptions
from .spectrum import (
    InputProcess,
    OutputSequenceLaw,
    SpectrumOptions,
    correct_probability_bound,
    cramer_bound,
    greedy_potential_bound,
    omega_direct,
    one_shot_bound,
    tilt_recursion,
)
from .telemetry import Metrics

LOG2 = math.log(2.0)


@dataclass
class VerifyOptions:
    # multiplies every instance count; each check runs at least one instance
    scale: float = 1.0
    seed: int = 0
    mesh_points: int = 10_000
    search: SearchOptions = field(default_factory=lambda: SearchOptions(mu_points=17, rho_points=33,
                                                                        lambda_points=17))
    ascent: AscentOptions = field(default_factory=lambda: AscentOptions(kkt_tolerance=1e-11))
    mirror: MirrorOptions = field(default_factory=MirrorOptions)
    capacity: CapacityOptions = field(default_factory=CapacityOptions)
    oracle: OracleOptions = field(default_factory=OracleOptions)
    spectrum: SpectrumOptions = field(default_factory=SpectrumOptions)
    only: Tuple[str, ...] = ()


@dataclass
class CheckResult:
    name: str
    instances: int = 0
    violations: int = 0
    worst: float = 0.0
    details: List[str] = field(default_factory=list)

    def record(self, excess: float, detail: str):
        """Count one instance; ``excess`` > 0 is a violation by that margin."""
        self.instances += 1
        if excess > 0:
            self.violations += 1
            self.details.append(detail)
        self.worst = max(self.worst, excess)

    def failed(self, detail: str):
        self.instances += 1
        self.violations += 1
        self.worst = math.inf
        self.details.append(detail)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_record(self) -> Dict[str, object]:
        return {"name": self.name, "instances": self.instances, "violations": self.violations,
                "worst": self.worst, "details": self.details[:10]}


@dataclass
class VerifyReport:
    checks: List[CheckResult]

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    @property
    def violations(self) -> int:
        return sum(check.violations for check in self.checks)


def _scaled(base: int, options: VerifyOptions) -> int:
    return max(1, int(round(base * options.scale)))


def _channel(rng: np.random.Generator, low: int = 2, high: int = 4, cost_scale: float = 1.0) -> Channel:
    return random_channel(rng, int(rng.integers(low, high + 1)), int(rng.integers(low, high + 1)), cost_scale)


def _budget(rng: np.random.Generator, channel: Channel) -> float:
    """A budget strictly between the cheapest and the dearest input."""
    return float(channel.gamma_0 + rng.uniform(0.1, 0.9) * (channel.gamma_max - channel.gamma_0))


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def check_arimoto_equivalence(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng)
        gamma, rate = _budget(rng, channel), rng.uniform(0.0, 2.0)
        params = TiltParams(rng.uniform(0.0, 2.0), rng.uniform(0.05, 5.0))
        oh = g_oh_point(rate, gamma, channel, params, options.ascent)
        ar = g_ar_point(rate, gamma, channel, params.mu, params.rho, options.ascent)
        result.record(_relative(oh, ar) - 1e-10, f"{params}: oh={oh!r} ar={ar!r}")


def check_inner_minimizer(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng)
        q = Distribution(rng.dirichlet(np.ones(channel.input_size)))
        params = TiltParams(rng.uniform(0.0, 2.0), rng.uniform(0.1, 3.0))
        best = q_star(q, channel, params)
        at_best = omega_pair(q, best, channel, params)
        lam, mu = params.lam, params.mu
        with np.errstate(divide="ignore"):
            column = logsumexp(np.log(q.weights)[:, None] + (1.0 + lam) * channel.log_transition()
                               - mu * lam * channel.cost[:, None], axis=0)
        mesh = rng.dirichlet(np.ones(channel.output_size), size=options.mesh_points)
        reachable = np.isfinite(column)
        mesh_values = logsumexp(column[reachable][None, :] - lam * np.log(mesh[:, reachable]), axis=1)
        below = at_best - float(mesh_values.min()) - 1e-12
        identity = _relative(at_best, (1.0 + lam) * j_fun(q, channel, mu, params.rho)) - 1e-10
        result.record(max(below, identity), f"{params}: omega*={at_best!r}, mesh min={mesh_values.min()!r}")


def check_dueck_koerner_pointwise(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        gamma, rate = _budget(rng, channel), rng.uniform(0.0, 2.0)
        mu, rho = rng.uniform(0.0, 2.0), rng.uniform(0.05, 0.9)
        dk = minimize_dk(rate, gamma, channel, mu * rho, rho, options.mirror).value
        ar = g_ar_point(rate, gamma, channel, mu, rho, options.ascent)
        result.record(abs(dk - ar) - 1e-6, f"mu={mu}, rho={rho}: dk={dk!r} ar={ar!r}")


def check_decomposition(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        conditional = rng.dirichlet(np.ones(channel.output_size), size=channel.input_size)
        conditional = np.where(channel.support, conditional, 0.0)
        conditional /= conditional.sum(axis=1, keepdims=True)
        q = JointDistribution.compose(rng.dirichlet(np.ones(channel.input_size)), conditional)
        mu, rho = rng.uniform(0.0, 2.0), rng.uniform(0.05, 0.95)
        lhs, rhs = decomposition_check(q, channel, mu, rho)
        result.record(_relative(lhs, rhs) - 1e-10, f"mu={mu}, rho={rho}: lhs={lhs!r} rhs={rhs!r}")

        # at q_X o V both divergences vanish, so both sides equal -max J
        optimum = backward_optimizer(channel, mu, rho, options.ascent)
        lhs, rhs = decomposition_check(optimum, channel, mu, rho)
        best = maximize_j(channel, mu, rho, options.ascent).value
        result.record(max(_relative(lhs, -best), _relative(rhs, -best)) - 1e-9,
                      f"mu={mu}, rho={rho}: at q_X o V lhs={lhs!r} rhs={rhs!r}, max J={best!r}")


def check_exponent_equivalence(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        gamma = _budget(rng, channel)
        rate = capacity(channel, gamma, options.capacity).value + rng.uniform(0.05, 2.0)
        dk = g_dk(rate, gamma, channel, options.search, options.mirror).value
        oh = g_oh_sup(rate, gamma, channel, options.search, options.ascent).value
        result.record(abs(dk - oh) - 1e-5, f"R={rate}, gamma={gamma}: dk={dk!r} oh={oh!r}")


def check_zero_crossing(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        gamma = _budget(rng, channel)
        cap = capacity(channel, gamma, options.capacity).value
        below = g_dk(cap - 0.01, gamma, channel, options.search, options.mirror).value
        above = g_dk(cap + 0.05, gamma, channel, options.search, options.mirror).value
        result.record(max(below - 1e-9, 1e-6 - above), f"C={cap}: G(C-0.01)={below!r}, G(C+0.05)={above!r}")


def check_identity_channel(rng, count, options, result):
    channel = Channel.identity(2)
    for delta in (0.1, 0.5, 1.0):
        rate = LOG2 + delta
        values = {
            "oh": g_oh_sup(rate, 0.0, channel, options.search, options.ascent).value,
            "ar": g_ar_sup(rate, 0.0, channel, options.search, options.ascent).value,
            "dk": g_dk(rate, 0.0, channel, options.search, options.mirror).value,
        }
        for method, value in values.items():
            result.record(abs(value - delta) - 1e-5, f"{method} at R=log2+{delta}: {value!r}")
        for n in (1, 2):
            try:
                brute_force_gn(n, rate, 0.0, channel, options.oracle)
                result.failed(f"n={n}, R=log2+{delta} should have no one-to-one code")
            except InfeasibleError:
                result.record(0.0, "")
    for n in (1, 2):
        found = brute_force_gn(n, LOG2, 0.0, channel, options.oracle)
        result.record(abs(found.g_n) - 1e-9, f"G^({n})(log 2) = {found.g_n!r}")


def _upper_budget(rng: np.random.Generator, channel: Channel) -> float:
    """A budget in the upper half of [gamma_0, gamma_max], where binary words of length 2 may mix symbols."""
    return float(channel.gamma_0 + rng.uniform(0.5, 1.0) * (channel.gamma_max - channel.gamma_0))


def check_oracle_dominance(rng, count, options, result):
    for index in range(count):
        channel = _channel(rng, 2, 2)
        # alternate between interior budgets and the unconstrained one
        gamma = float(channel.gamma_max) if index % 4 == 3 else _upper_budget(rng, channel)
        n = int(rng.integers(1, 3))
        available = len(feasible_words(n, gamma, channel, options.oracle))
        if available < 2:
            n, available = 2, len(feasible_words(2, gamma, channel, options.oracle))
        messages = int(rng.integers(2, available + 1))
        rate = math.log(messages) / n
        found = brute_force_gn(n, rate, gamma, channel, options.oracle)
        dk = g_dk(rate, gamma, channel, options.search, options.mirror).value
        result.record(dk - found.g_n - 1e-6, f"n={n}, R={rate}, gamma={gamma}: G^(n)={found.g_n!r} < G_DK={dk!r}")
        if found.g_n > rate + 1e-12:
            result.failed(f"G^({n})={found.g_n!r} exceeds R={rate}")
    for _ in range(max(1, count // 4)):
        channel = _channel(rng, 2, 2)
        cases = [(float(channel.gamma_max), rng.uniform(0.05, LOG2), ((1, 1), (1, 2))),
                 (_upper_budget(rng, channel), rng.uniform(0.05, math.log(3) / 2), ((2, 2),))]
        for gamma, rate, splits in cases:
            for n, m in splits:
                try:
                    lhs, rhs = subadditivity_check(n, m, rate, gamma, channel, options.oracle)
                except InfeasibleError:
                    continue
                result.record(lhs - rhs - 1e-9, f"({n},{m}) at R={rate}, gamma={gamma}: {lhs!r} > {rhs!r}")


def check_oracle_monotonicity(rng, count, options, result):
    for _ in range(count):
        channel = random_channel(rng, 2, 2, cost_scale=1.0)
        n = int(rng.integers(1, 3))
        gamma = float(channel.gamma_max)
        previous = -math.inf
        for messages in range(1, 2 ** n + 1):
            g_n = brute_force_gn(n, math.log(messages) / n, gamma, channel, options.oracle).g_n
            result.record(previous - g_n - 1e-12, f"G^({n}) decreased at M={messages}")
            previous = g_n
        rate = math.log(2) / n
        previous = math.inf
        for gamma in np.linspace(channel.gamma_0, channel.gamma_max, 4):
            try:
                g_n = brute_force_gn(n, rate, float(gamma), channel, options.oracle).g_n
            except InfeasibleError:
                continue
            result.record(g_n - previous - 1e-12, f"G^({n}) increased at gamma={gamma}")
            previous = g_n


def check_map_optimality(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        words = rng.choice(channel.input_size, size=2, replace=False)
        book = Codebook.from_words(channel, [[int(words[0])], [int(words[1])]])
        best = map_correct_probability(book, channel)
        for regions in product(range(2), repeat=channel.output_size):
            pc = decoder_correct_probability(book, np.array(regions), channel)
            result.record(pc - best - 1e-15, f"decoder {regions} beats MAP: {pc!r} > {best!r}")


def check_tilt_recursion(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        n = int(rng.integers(1, 4))
        process = InputProcess.random(rng, channel.input_size, n)
        outputs = OutputSequenceLaw.product([rng.dirichlet(np.ones(channel.output_size)) for _ in range(n)])
        params = TiltParams(rng.uniform(0.0, 2.0), rng.uniform(0.05, 3.0))
        state = tilt_recursion(process, outputs, channel, params, options.spectrum)
        direct = omega_direct(process, outputs, channel, params, options.spectrum)
        result.record(_relative(sum(state.log_phi), direct) - 1e-10,
                      f"n={n}, {params}: recursion={sum(state.log_phi)!r} direct={direct!r}")


def check_potential_cap(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        n = int(rng.integers(1, 4))
        process = InputProcess.random(rng, channel.input_size, n)
        params = TiltParams(rng.uniform(0.0, 2.0), rng.uniform(0.05, 3.0))
        trace = greedy_potential_bound(process, channel, params, options.spectrum, options.ascent)
        result.record(max(trace.per_step) - trace.cap - 1e-9, f"n={n}, {params}: {trace.per_step} > {trace.cap!r}")


def check_one_shot(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        n = int(rng.integers(1, 3))
        words = list(product(range(channel.input_size), repeat=n))
        size = int(rng.integers(1, len(words) + 1))
        chosen = rng.choice(len(words), size=size, replace=False)
        book = Codebook.from_words(channel, [words[i] for i in sorted(chosen)])
        regions = rng.integers(0, size, size=channel.output_size ** n)
        outputs = OutputSequenceLaw.full(rng.dirichlet(np.ones(channel.output_size ** n)), n)
        eta = rng.uniform(0.01, 2.0)
        pc, bound = one_shot_bound(book, regions, channel, outputs, eta, options=options.spectrum)
        result.record(pc - bound, f"n={n}, M={size}, eta={eta}: {pc!r} > {bound!r}")


def check_tilted_bound(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        n = int(rng.integers(1, 3))
        words = list(product(range(channel.input_size), repeat=n))
        size = int(rng.integers(1, len(words) + 1))
        chosen = rng.choice(len(words), size=size, replace=False)
        book = Codebook.from_words(channel, [words[i] for i in sorted(chosen)])
        params = TiltParams(rng.uniform(0.0, 2.0), rng.uniform(0.05, 3.0))
        pc, bound = correct_probability_bound(book, channel, params, options=options.spectrum)
        result.record(pc - bound, f"n={n}, M={size}, {params}: {pc!r} > {bound!r}")


def check_cramer(rng, count, options, result):
    for _ in range(count):
        support = int(rng.integers(1, 7))
        values = rng.normal(size=support)
        probabilities = rng.dirichlet(np.ones(support))
        prob, bound = cramer_bound(values, probabilities, rng.uniform(-2.0, 2.0), rng.uniform(0.1, 3.0))
        result.record(prob - bound, f"{prob!r} > {bound!r}")


def _constant_composition_code(rng: np.random.Generator, channel: Channel) -> Codebook:
    n = int(rng.integers(2, 4))
    base = rng.integers(0, channel.input_size, size=n)
    arrangements = sorted(set(permutations(int(x) for x in base)))
    size = int(rng.integers(1, len(arrangements) + 1))
    chosen = sorted(rng.choice(len(arrangements), size=size, replace=False))
    return Codebook.from_words(channel, [arrangements[i] for i in chosen])


def check_constant_composition(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 3)
        test = random_channel(rng, channel.input_size, channel.output_size, 0.0)
        book = _constant_composition_code(rng, channel)
        constant_composition_divergence(book, test, channel, options.oracle)
        result.record(0.0, "")

    accepted, attempts = 0, 0
    while accepted < count and attempts < 20 * count:
        attempts += 1
        channel = _channel(rng, 2, 3)
        test = random_channel(rng, channel.input_size, channel.output_size, 0.0)
        book = _constant_composition_code(rng, channel)
        regions = map_decoder(book, test, options.oracle)
        pc_test = decoder_correct_probability(book, regions, test, options.oracle)
        delta = max(1.0 - pc_test, 0.0)
        if delta >= 0.5:
            continue
        pc, bound = log_sum_lower_bound(book, regions, test, channel, delta, options.oracle)
        result.record(bound - pc, f"log-sum bound {bound!r} > P_c {pc!r}")
        accepted += 1


def check_convexity(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng, 2, 2)

        def g(rate: float, gamma: float) -> float:
            return g_dk(rate, gamma, channel, options.search, options.mirror).value

        (r1, r2), (g1, g2) = np.sort(rng.uniform(0.0, 2.0, 2)), np.sort([_budget(rng, channel) for _ in range(2)])
        at_11, at_22, at_21, at_12 = g(r1, g1), g(r2, g2), g(r2, g1), g(r1, g2)
        middle = g(0.5 * (r1 + r2), 0.5 * (g1 + g2))
        result.record(middle - 0.5 * (at_11 + at_22) - 1e-9, f"midpoint {middle!r} above chord")
        result.record(abs(at_21 - at_11) - (r2 - r1) - 1e-9, f"slope in R above 1 between {r1} and {r2}")
        result.record(at_11 - at_21 - 1e-9, f"G decreased in R between {r1} and {r2}")
        result.record(at_12 - at_11 - 1e-9, f"G increased in gamma between {g1} and {g2}")


def check_capacity_certificate(rng, count, options, result):
    for _ in range(count):
        channel = _channel(rng)
        found = capacity(channel, _budget(rng, channel), options.capacity)
        result.record(found.duality_gap - options.capacity.gap_tolerance, f"duality gap {found.duality_gap!r}")


CheckFunction = Callable[[np.random.Generator, int, VerifyOptions, CheckResult], None]

CHECKS: Dict[str, Tuple[CheckFunction, int]] = {
    "arimoto_equivalence": (check_arimoto_equivalence, 200),
    "inner_minimizer": (check_inner_minimizer, 100),
    "dueck_koerner_pointwise": (check_dueck_koerner_pointwise, 100),
    "decomposition": (check_decomposition, 50),
    "exponent_equivalence": (check_exponent_equivalence, 30),
    "zero_crossing": (check_zero_crossing, 30),
    "identity_channel": (check_identity_channel, 1),
    "oracle_dominance": (check_oracle_dominance, 20),
    "oracle_monotonicity": (check_oracle_monotonicity, 10),
    "map_optimality": (check_map_optimality, 20),
    "tilt_recursion": (check_tilt_recursion, 100),
    "potential_cap": (check_potential_cap, 100),
    "one_shot": (check_one_shot, 500),
    "tilted_bound": (check_tilted_bound, 100),
    "cramer": (check_cramer, 500),
    "constant_composition": (check_constant_composition, 50),
    "convexity": (check_convexity, 50),
    "capacity_certificate": (check_capacity_certificate, 50),
}


def run_checks(options: Optional[VerifyOptions] = None, metrics: Optional[Metrics] = None) -> VerifyReport:
    options = options or VerifyOptions()
    unknown = set(options.only) - set(CHECKS)
    if unknown:
        raise ValueError(f"Unknown checks: {', '.join(sorted(unknown))}.")

    checks = []
    for index, (name, (function, base)) in enumerate(CHECKS.items()):
        if options.only and name not in options.only:
            continue
        # one stream per check so selecting a subset does not change the instances
        rng = np.random.default_rng([options.seed, index])
        result = CheckResult(name)
        try:
            if metrics is not None:
                with metrics.timed(f"verify.{name}"):
                    function(rng, _scaled(base, options), options, result)
            else:
                function(rng, _scaled(base, options), options, result)
        except ConvexpError as e:
            result.failed(f"{type(e).__name__}: {e}")
        if metrics is not None:
            metrics.inc("verify.checks", result.instances)
            metrics.inc("verify.violations", result.violations)
        level = logging.INFO if result.ok else logging.WARNING
        logging.log(level, f"{name}: {result.instances} instances, {result.violations} violations "
                           f"(worst excess {result.worst:.3g}).")
        checks.append(result)
    return VerifyReport(checks)


def verify_channel(channel: Channel, name: str, options: Optional[VerifyOptions] = None,
                   metrics: Optional[Metrics] = None) -> CheckResult:
    """Agreement of the three exponent forms on one channel, at its capacity and above it."""
    options = options or VerifyOptions()
    result = CheckResult(f"channel:{name}")
    gammas = sorted({channel.gamma_max, 0.5 * (channel.gamma_0 + channel.gamma_max)})
    try:
        for gamma in gammas:
            cap = capacity(channel, gamma, options.capacity).value
            result.record(g_dk(cap, gamma, channel, options.search, options.mirror).value - 1e-6,
                          f"G_DK(C={cap}) at gamma={gamma} is positive")
            for offset in (0.1, 0.5):
                rate = cap + offset
                values = {
                    "oh": g_oh_sup(rate, gamma, channel, options.search, options.ascent).value,
                    "ar": g_ar_sup(rate, gamma, channel, options.search, options.ascent).value,
                    "dk": g_dk(rate, gamma, channel, options.search, options.mirror).value,
                }
                spread = max(values.values()) - min(values.values())
                result.record(spread - 1e-5, f"R={rate}, gamma={gamma}: {values}")
    except ConvexpError as e:
        result.failed(f"{type(e).__name__}: {e}")
    if metrics is not None:
        metrics.inc("verify.checks", result.instances)
        metrics.inc("verify.violations", result.violations)
    return result
