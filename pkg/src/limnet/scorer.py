"""Attention scorer primitives: stable softmax and the FFN-tanh-FFN scorer.

The scorer maps one embedding x to one scalar attention logit:

    score(x) = w2 . tanh(w1 @ x + b1) + b2

Forward and backward passes are written out analytically; a central
finite-difference oracle is provided so the analytic gradients can be
cross-checked coordinate by coordinate.

Everything here is a pure function over immutable inputs and is safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalError


# exp(x) is positive for every finite x; when the shifted exponent
# underflows float64 the weight is floored at the smallest subnormal so
# the strict-positivity contract survives (error below 5e-324)
TINIEST = np.nextafter(0.0, 1.0)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D score vector.

    Uses max-subtraction, so the result is invariant under adding a
    constant to all inputs. Every output entry is strictly positive and
    the entries sum to 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("empty attention score set")
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite attention score")
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return np.maximum(e / e.sum(), TINIEST)


@dataclass
class ScorerParams:
    """One attention scorer: two affine maps with a tanh between.

    w1 is (hidden, dim), b1 is (hidden,), w2 is (hidden,), b2 is a
    0-d array. All arrays are float64.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "ScorerParams":
        return cls(
            w1=np.zeros((hidden, dim)),
            b1=np.zeros(hidden),
            w2=np.zeros(hidden),
            b2=np.zeros(()),
        )

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def validate(self) -> None:
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise DimensionMismatch(
                f"scorer shapes inconsistent: w1 {self.w1.shape}, b1 {self.b1.shape}, w2 {self.w2.shape}"
            )
        if self.b2.shape != ():
            raise DimensionMismatch(f"scorer b2 must be a scalar, got shape {self.b2.shape}")
        for name, t in self.tensors():
            if not np.all(np.isfinite(t)):
                raise NumericalError(f"non-finite entries in scorer tensor {name}")


@dataclass
class ScorerGrad:
    """Accumulated partials of a scalar loss, shaped like ScorerParams."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, params: ScorerParams) -> "ScorerGrad":
        return cls(
            w1=np.zeros_like(params.w1),
            b1=np.zeros_like(params.b1),
            w2=np.zeros_like(params.w2),
            b2=np.zeros_like(params.b2),
        )

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


def _check_input(params: ScorerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise DimensionMismatch(
            f"scorer expects input dim {params.input_dim}, got {x.shape[-1] if x.ndim else 0}"
        )
    return x


def scorer_forward(params: ScorerParams, x: np.ndarray) -> float:
    """Scalar attention logit w2 . tanh(w1 @ x + b1) + b2."""
    x = _check_input(params, x)
    t = np.tanh(params.w1 @ x + params.b1)
    return float(params.w2 @ t + params.b2)


def scorer_backward(
    params: ScorerParams, x: np.ndarray, upstream: float
) -> tuple[ScorerGrad, np.ndarray]:
    """Gradients of upstream * score w.r.t. the parameters and the input.

    Chain rule through the tanh: with z = w1 @ x + b1 and t = tanh(z),
    d(score)/dz = w2 * (1 - t^2).
    """
    x = _check_input(params, x)
    z = params.w1 @ x + params.b1
    t = np.tanh(z)
    dz = upstream * params.w2 * (1.0 - t * t)
    grad = ScorerGrad(
        w1=np.outer(dz, x),
        b1=dz,
        w2=upstream * t,
        b2=np.asarray(float(upstream)),
    )
    grad_x = params.w1.T @ dz
    return grad, grad_x


def scorer_batch_forward(params: ScorerParams, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores for a batch of inputs xs with shape (..., dim).

    Returns (scores, tanh_cache); the cache is consumed by
    scorer_batch_backward. Summation order is fixed, so results are
    bit-identical regardless of how callers schedule the batch.
    """
    if xs.shape[-1] != params.input_dim:
        raise DimensionMismatch(
            f"scorer expects input dim {params.input_dim}, got {xs.shape[-1]}"
        )
    t = np.tanh(xs @ params.w1.T + params.b1)
    scores = t @ params.w2 + params.b2
    return scores, t


def scorer_batch_backward(
    params: ScorerParams,
    xs: np.ndarray,
    tanh_cache: np.ndarray,
    upstream: np.ndarray,
    grad: ScorerGrad,
) -> np.ndarray:
    """Accumulate into grad the partials from a batch; return d/d(xs).

    upstream has the batch shape of the scores (xs.shape minus the last
    axis). Gradients are summed over the batch in index order.
    """
    t = tanh_cache
    dz = upstream[..., None] * (params.w2 * (1.0 - t * t))
    flat_dz = dz.reshape(-1, params.hidden_size)
    flat_x = xs.reshape(-1, params.input_dim)
    grad.w1 += flat_dz.T @ flat_x
    grad.b1 += flat_dz.sum(axis=0)
    grad.w2 += (upstream[..., None] * t).reshape(-1, params.hidden_size).sum(axis=0)
    grad.b2 += upstream.sum()
    return dz @ params.w1


def finite_difference_grad(f, params: ScorerParams, eps: float) -> ScorerGrad:
    """Central-difference gradient of a scalar function of the parameters.

    Per coordinate: (f(p + eps*e) - f(p - eps*e)) / (2*eps). Independent
    of the analytic backward path; used as its oracle. f may return any
    float-convertible scalar, including extended-precision values, and
    the differencing then happens in the callback's arithmetic.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grad = ScorerGrad.zeros_like(params)
    work = params.copy()
    for (_, target), (gname, gout) in zip(work.tensors(), grad.tensors()):
        flat_t = target.reshape(-1)
        flat_g = gout.reshape(-1)
        for i in range(flat_t.size):
            orig = flat_t[i]
            flat_t[i] = orig + eps
            f_plus = f(work)
            flat_t[i] = orig - eps
            f_minus = f(work)
            flat_t[i] = orig
            if not (math.isfinite(float(f_plus)) and math.isfinite(float(f_minus))):
                raise NumericalError(f"non-finite evaluation while differencing {gname}[{i}]")
            flat_g[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-8); the fixed gradcheck error metric."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
