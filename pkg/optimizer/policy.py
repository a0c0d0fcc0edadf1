"""MLP политики: состояние соты -> 10 чисел в (-1, 1) -> набор параметров."""

from dataclasses import dataclass

import numpy as np

from actions.space import DEFAULT_SPECS, encode_action
from kpi.features import FEATURE_LENGTH

GROUNDED_CLIP = 0.999


@dataclass(frozen=True)
class PolicyShape:
    """
    Однослойный перцептрон с tanh на скрытом и выходном слоях.

    Веса лежат в одном векторе: W1 (hidden x input, по строкам), b1,
    W2 (output x hidden), b2.
    """

    input_dim: int = FEATURE_LENGTH
    hidden_dim: int = 16
    output_dim: int = len(DEFAULT_SPECS)

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ValueError("Размерности MLP должны быть положительными")

    @property
    def weight_count(self):
        return (
            self.input_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.output_dim
            + self.output_dim
        )

    def split(self, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.weight_count,):
            raise ValueError(
                f"ожидается {self.weight_count} весов, получено {weights.shape}"
            )
        first = self.input_dim * self.hidden_dim
        second = first + self.hidden_dim
        third = second + self.hidden_dim * self.output_dim
        return (
            weights[:first].reshape(self.hidden_dim, self.input_dim),
            weights[first:second],
            weights[second:third].reshape(self.output_dim, self.hidden_dim),
            weights[third:],
        )

    def join(self, w1, b1, w2, b2):
        return np.concatenate([np.ravel(w1), np.ravel(b1), np.ravel(w2), np.ravel(b2)])

    def as_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "output_dim": self.output_dim,
        }


DEFAULT_SHAPE = PolicyShape()


def policy_forward(weights, state, shape=DEFAULT_SHAPE):
    """out = tanh(W2 tanh(W1 s + b1) + b2)."""
    state = np.asarray(getattr(state, "values", state), dtype=float)
    if state.shape != (shape.input_dim,):
        raise ValueError(
            f"ожидается состояние длины {shape.input_dim}, получено {state.shape}"
        )
    w1, b1, w2, b2 = shape.split(weights)
    hidden = np.tanh(w1 @ state + b1)
    return np.tanh(w2 @ hidden + b2)


def grounded_weights(params, shape=DEFAULT_SHAPE, specs=None):
    """
    Веса, при которых политика выдаёт params независимо от состояния:
    все матрицы и b1 нулевые, b2 = arctanh(encode_action(params)).
    """
    specs = specs or DEFAULT_SPECS
    if shape.output_dim != len(specs):
        raise ValueError("Выход MLP не совпадает с числом параметров")
    target = np.clip(encode_action(params, specs), -GROUNDED_CLIP, GROUNDED_CLIP)
    return shape.join(
        np.zeros((shape.hidden_dim, shape.input_dim)),
        np.zeros(shape.hidden_dim),
        np.zeros((shape.output_dim, shape.hidden_dim)),
        np.arctanh(target),
    )
