from __future__ import annotations

from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import ChannelSpecError, DimensionError, PreconditionError

MAX_ALPHABET = 64
LOAD_TOLERANCE = 1e-12
DRIFT_TOLERANCE = 1e-9
LOG2 = math.log(2.0)

SPEC_KEYS = ("input_alphabet", "output_alphabet", "W", "cost")

ArrayLike = Union[np.ndarray, Sequence[float]]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _weights(value: Union["Distribution", ArrayLike]) -> np.ndarray:
    if isinstance(value, Distribution):
        return value.weights
    return np.asarray(value, dtype=float)


@dataclass(frozen=True, eq=False)
class Channel:
    """A discrete memoryless channel with a per-input cost.

    ``transition[x, y]`` is W(y|x) and ``cost[x]`` is c(x). Instances are validated on construction and immutable
    afterwards, so they can be shared freely between threads.
    """

    transition: np.ndarray
    cost: np.ndarray
    input_labels: Tuple[str, ...] = ()
    output_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        try:
            transition = np.array(self.transition, dtype=float)
            cost = np.array(self.cost, dtype=float)
        except (TypeError, ValueError) as e:
            raise ChannelSpecError(f"Channel entries must be numbers: {e}") from e

        if transition.ndim != 2 or 0 in transition.shape:
            raise ChannelSpecError(f"Transition matrix must be a non-empty 2-D array; got shape {transition.shape}.")
        rows, cols = transition.shape
        if rows > MAX_ALPHABET or cols > MAX_ALPHABET:
            raise ChannelSpecError(f"Alphabets are limited to {MAX_ALPHABET} symbols; got {rows}x{cols}.")
        if not np.all(np.isfinite(transition)):
            raise ChannelSpecError("Transition matrix contains non-finite entries.")
        negative = np.argwhere(transition < 0)
        if negative.size:
            x, y = negative[0]
            raise ChannelSpecError(f"Transition entry W[{x}][{y}] = {transition[x, y]} is negative.")
        deviations = np.abs(transition.sum(axis=1) - 1.0)
        bad = np.flatnonzero(deviations > LOAD_TOLERANCE)
        if bad.size:
            row = int(bad[0])
            raise ChannelSpecError(f"Row {row} of the transition matrix sums to {transition[row].sum()!r} "
                                   f"(deviation {deviations[row]:.3g} from 1).")

        if cost.ndim != 1 or cost.shape[0] != rows:
            raise ChannelSpecError(f"Cost vector must have one entry per input symbol ({rows}); got shape {cost.shape}.")
        if not np.all(np.isfinite(cost)):
            raise ChannelSpecError("Cost vector contains non-finite entries.")
        if np.any(cost < 0):
            x = int(np.flatnonzero(cost < 0)[0])
            raise ChannelSpecError(f"Cost of input {x} is negative ({cost[x]}).")

        input_labels = tuple(str(s) for s in self.input_labels) or tuple(str(i) for i in range(rows))
        output_labels = tuple(str(s) for s in self.output_labels) or tuple(str(i) for i in range(cols))
        if len(input_labels) != rows:
            raise ChannelSpecError(f"Got {len(input_labels)} input labels for {rows} rows.")
        if len(output_labels) != cols:
            raise ChannelSpecError(f"Got {len(output_labels)} output labels for {cols} columns.")

        object.__setattr__(self, "transition", _readonly(transition))
        object.__setattr__(self, "cost", _readonly(cost))
        object.__setattr__(self, "input_labels", input_labels)
        object.__setattr__(self, "output_labels", output_labels)

    @classmethod
    def from_matrix(
        cls,
        transition: Any,
        cost: Optional[ArrayLike] = None,
        input_labels: Sequence[str] = (),
        output_labels: Sequence[str] = (),
    ) -> Channel:
        transition = np.asarray(transition, dtype=float)
        if cost is None:
            cost = np.zeros(transition.shape[0] if transition.ndim == 2 else 0)
        return cls(transition, np.asarray(cost, dtype=float), tuple(input_labels), tuple(output_labels))

    @classmethod
    def identity(cls, size: int, cost: Optional[ArrayLike] = None) -> Channel:
        return cls.from_matrix(np.eye(size), cost)

    @classmethod
    def bsc(cls, crossover: float, cost: ArrayLike = (0.0, 0.0)) -> Channel:
        if not 0.0 <= crossover <= 1.0:
            raise ChannelSpecError(f"Crossover probability must lie in [0, 1]; got {crossover}.")
        p = crossover
        return cls.from_matrix([[1.0 - p, p], [p, 1.0 - p]], cost)

    @property
    def input_size(self) -> int:
        return self.transition.shape[0]

    @property
    def output_size(self) -> int:
        return self.transition.shape[1]

    @property
    def gamma_0(self) -> float:
        return float(self.cost.min())

    @property
    def gamma_max(self) -> float:
        return float(self.cost.max())

    @property
    def support(self) -> np.ndarray:
        return self.transition > 0

    @property
    def reachable_outputs(self) -> np.ndarray:
        return self.support.any(axis=0)

    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    def restrict_inputs(self, keep: np.ndarray) -> Channel:
        keep = np.asarray(keep, dtype=bool)
        labels = tuple(label for label, k in zip(self.input_labels, keep) if k)
        return Channel(self.transition[keep], self.cost[keep], labels, self.output_labels)

    def __repr__(self) -> str:
        return f"Channel(|X|={self.input_size}, |Y|={self.output_size}, cost={self.cost.tolist()})"


@dataclass(frozen=True, eq=False)
class Distribution:
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise PreconditionError(f"A distribution needs a non-empty 1-D weight vector; got shape {weights.shape}.")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise PreconditionError(f"Distribution weights must be finite and nonnegative: {weights.tolist()}.")
        deviation = abs(weights.sum() - 1.0)
        if deviation > DRIFT_TOLERANCE:
            raise PreconditionError(f"Distribution weights sum to {weights.sum()!r} (deviation {deviation:.3g}).")
        if deviation > LOAD_TOLERANCE:
            logging.warning(f"Renormalizing distribution with drift {deviation:.3g}.")
            weights = weights / weights.sum()
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def normalize(cls, weights: ArrayLike) -> Distribution:
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        assert total > 0, "cannot normalize an all-zero weight vector"
        return cls(weights / total)

    @classmethod
    def uniform(cls, size: int) -> Distribution:
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point(cls, size: int, index: int) -> Distribution:
        weights = np.zeros(size)
        weights[index] = 1.0
        return cls(weights)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return self.weights > threshold

    def expectation(self, values: ArrayLike) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def __repr__(self) -> str:
        return f"Distribution({np.array2string(self.weights, precision=6)})"


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """A law q(x, y) on the input-output product alphabet.

    Conditionals on zero-probability conditioning symbols are undefined; ``forward`` and ``backward`` return zero
    rows (columns) for them and every sum over conditionals skips them.
    """

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 2 or 0 in weights.shape:
            raise PreconditionError(f"A joint distribution needs a non-empty 2-D table; got shape {weights.shape}.")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise PreconditionError("Joint distribution weights must be finite and nonnegative.")
        deviation = abs(weights.sum() - 1.0)
        if deviation > DRIFT_TOLERANCE:
            raise PreconditionError(f"Joint weights sum to {weights.sum()!r} (deviation {deviation:.3g}).")
        if deviation > LOAD_TOLERANCE:
            logging.warning(f"Renormalizing joint distribution with drift {deviation:.3g}.")
            weights = weights / weights.sum()
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def normalize(cls, weights: np.ndarray) -> JointDistribution:
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        assert total > 0, "cannot normalize an all-zero joint table"
        return cls(weights / total)

    @classmethod
    def compose(cls, q_input: Union[Distribution, ArrayLike], conditional: np.ndarray) -> JointDistribution:
        q = _weights(q_input)
        conditional = np.asarray(conditional, dtype=float)
        if conditional.shape[0] != q.shape[0]:
            raise DimensionError(f"Input law has {q.shape[0]} symbols but the conditional has {conditional.shape[0]} rows.")
        return cls(q[:, None] * conditional)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape

    @property
    def input_marginal(self) -> Distribution:
        return Distribution.normalize(self.weights.sum(axis=1))

    @property
    def output_marginal(self) -> Distribution:
        return Distribution.normalize(self.weights.sum(axis=0))

    def forward(self) -> np.ndarray:
        """q_{Y|X} as a row-stochastic matrix; rows with q_X(x) = 0 are zero."""
        q_x = self.weights.sum(axis=1)
        out = np.zeros_like(self.weights)
        np.divide(self.weights, q_x[:, None], out=out, where=q_x[:, None] > 0)
        return out

    def backward(self) -> np.ndarray:
        """q_{X|Y} indexed [x, y]; columns with q_Y(y) = 0 are zero."""
        q_y = self.weights.sum(axis=0)
        out = np.zeros_like(self.weights)
        np.divide(self.weights, q_y[None, :], out=out, where=q_y[None, :] > 0)
        return out

    def expected_cost(self, channel: Channel) -> float:
        _check_joint(self, channel)
        return float(self.weights.sum(axis=1) @ channel.cost)


@dataclass(frozen=True)
class TiltParams:
    """The tilting pair (mu, lambda); ``lam`` avoids the keyword.

    ``lam = inf`` stands for the rho -> 1 endpoint of an exponent sweep and is rejected by every evaluation.
    """

    mu: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise PreconditionError(f"mu must be a finite nonnegative number; got {self.mu}.")
        if math.isnan(self.lam) or self.lam < 0:
            raise PreconditionError(f"lambda must be nonnegative; got {self.lam}.")

    @classmethod
    def from_rho(cls, mu: float, rho: float) -> TiltParams:
        if rho == 1.0:
            return cls(mu, math.inf)
        check_rho(rho)
        return cls(mu, rho / (1.0 - rho))

    @property
    def rho(self) -> float:
        if math.isinf(self.lam):
            return 1.0
        return self.lam / (1.0 + self.lam)

    def check_finite(self) -> TiltParams:
        if math.isinf(self.lam):
            raise PreconditionError("lambda must be finite for this evaluation.")
        return self

    def check_arimoto(self) -> TiltParams:
        if self.lam >= 1:
            raise PreconditionError(f"Arimoto-form parameters need lambda in [0, 1); got {self.lam}.")
        return self


def check_rho(rho: float):
    if not 0.0 <= rho < 1.0:
        raise PreconditionError(f"rho must lie in [0, 1); got {rho}.")


def _check_input(q: np.ndarray, channel: Channel):
    if q.ndim != 1 or q.shape[0] != channel.input_size:
        raise DimensionError(f"Input law has shape {q.shape}; channel has {channel.input_size} inputs.")


def _check_output(q: np.ndarray, channel: Channel):
    if q.ndim != 1 or q.shape[0] != channel.output_size:
        raise DimensionError(f"Output law has shape {q.shape}; channel has {channel.output_size} outputs.")


def _check_joint(q: JointDistribution, channel: Channel):
    if q.shape != channel.transition.shape:
        raise DimensionError(f"Joint law has shape {q.shape}; channel is {channel.transition.shape}.")


def entropy(p: Union[Distribution, ArrayLike]) -> float:
    p = _weights(p)
    return float(-xlogy(p, p).sum())


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def kl_divergence(p: Union[Distribution, ArrayLike], q: Union[Distribution, ArrayLike]) -> float:
    p, q = _weights(p), _weights(q)
    if p.shape != q.shape:
        raise DimensionError(f"Cannot compare distributions of shapes {p.shape} and {q.shape}.")
    return float(rel_entr(p, q).sum())


def to_bits(value: float) -> float:
    return value / LOG2


def output_law(q_input: Union[Distribution, ArrayLike], channel: Channel) -> np.ndarray:
    q = _weights(q_input)
    _check_input(q, channel)
    return q @ channel.transition


def mutual_information(q_input: Union[Distribution, ArrayLike], channel: Channel) -> float:
    """I(q_X, W) in nats."""
    q = _weights(q_input)
    _check_input(q, channel)
    q_y = q @ channel.transition
    on = q > 0
    per_input = rel_entr(channel.transition[on], q_y[None, :]).sum(axis=1)
    return max(float(q[on] @ per_input), 0.0)


def joint_mutual_information(q: JointDistribution) -> float:
    """I(q_X, q_{Y|X}) of a joint law, in nats."""
    q_x = q.weights.sum(axis=1)
    q_y = q.weights.sum(axis=0)
    return max(float(rel_entr(q.weights, np.outer(q_x, q_y)).sum()), 0.0)


def conditional_divergence(q: JointDistribution, channel: Channel) -> float:
    """D(q_{Y|X} || W | q_X); +inf when q puts mass where W(y|x) = 0."""
    _check_joint(q, channel)
    q_x = q.weights.sum(axis=1)
    return max(float(rel_entr(q.weights, q_x[:, None] * channel.transition).sum()), 0.0)


def random_channel(
    rng: np.random.Generator,
    input_size: int,
    output_size: int,
    cost_scale: float = 1.0,
    sparsity: float = 0.0,
) -> Channel:
    transition = rng.dirichlet(np.ones(output_size), size=input_size)
    if sparsity > 0:
        drop = rng.random(transition.shape) < sparsity
        drop[np.arange(input_size), transition.argmax(axis=1)] = False
        transition = np.where(drop, 0.0, transition)
        transition /= transition.sum(axis=1, keepdims=True)
    cost = rng.uniform(0.0, cost_scale, size=input_size) if cost_scale > 0 else np.zeros(input_size)
    return Channel.from_matrix(transition, cost)


def load_channel(source: Union[str, Path, Mapping[str, Any]]) -> Channel:
    """Load a channel from a path, a JSON text or an already parsed mapping.

    The document must have exactly the keys ``input_alphabet``, ``output_alphabet``, ``W`` and ``cost``.
    """
    if isinstance(source, Mapping):
        document = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as e:
                raise ChannelSpecError(f"Cannot read channel file {source}: {e}") from e
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ChannelSpecError(f"Channel document is not valid JSON: {e}") from e

    if not isinstance(document, Mapping):
        raise ChannelSpecError("Channel document must be a JSON object.")
    keys = set(document)
    if keys != set(SPEC_KEYS):
        missing = sorted(set(SPEC_KEYS) - keys)
        extra = sorted(keys - set(SPEC_KEYS))
        raise ChannelSpecError(f"Channel document keys mismatch; missing {missing}, unexpected {extra}.")

    inputs, outputs, matrix = document["input_alphabet"], document["output_alphabet"], document["W"]
    if not isinstance(inputs, list) or not all(isinstance(s, str) for s in inputs):
        raise ChannelSpecError("input_alphabet must be a list of strings.")
    if not isinstance(outputs, list) or not all(isinstance(s, str) for s in outputs):
        raise ChannelSpecError("output_alphabet must be a list of strings.")
    if not isinstance(matrix, list) or len(matrix) != len(inputs):
        raise ChannelSpecError(f"W must have one row per input symbol ({len(inputs)}).")
    for x, row in enumerate(matrix):
        if not isinstance(row, list) or len(row) != len(outputs):
            raise ChannelSpecError(f"Row {x} of W must have {len(outputs)} entries.")
    cost = document["cost"]
    if not isinstance(cost, list):
        raise ChannelSpecError("cost must be a list of nonnegative numbers.")

    return Channel(matrix, cost, tuple(inputs), tuple(outputs))


def channel_to_spec(channel: Channel) -> Dict[str, Any]:
    return {
        "input_alphabet": list(channel.input_labels),
        "output_alphabet": list(channel.output_labels),
        "W": channel.transition.tolist(),
        "cost": channel.cost.tolist(),
    }
