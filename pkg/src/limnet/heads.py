"""Task predictors over mixed embeddings, plus cross-entropy loss.

The default head is a single affine map (logits = W @ x + b). A deeper
head with tanh hidden layers can be configured; it exists for the
overfitting-gap comparison, not as the reference predictor. The pair
head consumes the concatenation of two mixed embeddings in (a, b) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .scorer import softmax


@dataclass
class HeadParams:
    """An MLP head: affine layers with tanh between, none after the last.

    weights[k] has shape (out_k, in_k); zero hidden layers gives the
    plain linear classifier.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @classmethod
    def zeros(cls, input_dim: int, num_classes: int, hidden: tuple[int, ...] = ()) -> "HeadParams":
        if num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {num_classes}")
        sizes = [input_dim, *hidden, num_classes]
        return cls(
            weights=[np.zeros((o, i)) for i, o in zip(sizes, sizes[1:])],
            biases=[np.zeros(o) for o in sizes[1:]],
        )

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"w{k}", w))
            out.append((f"b{k}", b))
        return out

    def validate(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise DimensionMismatch("head must have matching weight/bias lists")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"head layer {k} shapes inconsistent: {w.shape}, {b.shape}")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DimensionMismatch(f"head layer {k} input {w.shape[1]} != previous output")
        if self.num_classes < 2:
            raise DimensionMismatch("head needs at least 2 output classes")


@dataclass
class HeadGrad:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: HeadParams) -> "HeadGrad":
        return cls(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"w{k}", w))
            out.append((f"b{k}", b))
        return out


def head_forward(params: HeadParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits plus the per-layer input cache needed for the backward pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise DimensionMismatch(
            f"head expects input dim {params.input_dim}, got {x.shape}"
        )
    cache = [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = w @ h + b
        if k < last:
            h = np.tanh(h)
            cache.append(h)
    return h, cache


def head_backward(
    params: HeadParams, cache: list[np.ndarray], d_logits: np.ndarray, grad: HeadGrad
) -> np.ndarray:
    """Accumulate layer gradients into grad; return d(loss)/d(input)."""
    d = np.asarray(d_logits, dtype=np.float64)
    for k in range(len(params.weights) - 1, -1, -1):
        inp = cache[k]
        grad.weights[k] += np.outer(d, inp)
        grad.biases[k] += d
        d = params.weights[k].T @ d
        if k > 0:
            # cache[k] holds tanh output of layer k-1
            d = d * (1.0 - inp * inp)
    return d


def classify_sentence(m: np.ndarray, params: HeadParams) -> np.ndarray:
    """Class logits for one mixed sentence embedding."""
    logits, _ = head_forward(params, m)
    return logits


def classify_pair(m_a: np.ndarray, m_b: np.ndarray, params: HeadParams) -> np.ndarray:
    """Relation logits for an ordered sentence pair, input concat(a, b)."""
    m_a = np.asarray(m_a, dtype=np.float64)
    m_b = np.asarray(m_b, dtype=np.float64)
    if m_a.shape != m_b.shape or m_a.ndim != 1:
        raise DimensionMismatch(f"pair inputs must be equal-length vectors, got {m_a.shape} and {m_b.shape}")
    logits, _ = head_forward(params, np.concatenate([m_a, m_b]))
    return logits


def predict(logits: np.ndarray) -> int:
    """Argmax with lowest-index tie-break."""
    return int(np.argmax(logits))


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Negative log softmax likelihood and its gradient w.r.t. the logits.

    Computed via the shifted log-sum-exp, so adding a constant to all
    logits leaves loss and gradient unchanged.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ConfigError(f"label {label} out of range for {n} classes")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    loss = float(log_z - shifted[label])
    grad = softmax(logits)
    grad[label] -= 1.0
    return loss, grad
