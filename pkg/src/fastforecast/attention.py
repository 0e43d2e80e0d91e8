"""Exact softmax attention: the reference kernels and the multi-head wrapper.

Three equivalent-or-related forms are provided:
  * ``scaled_dot_attention`` — softmax(Q Kᵀ / √d_k) V, via the softmax primitive;
  * ``exact_bidirectional``  — the same map through the explicit attention
    matrix A = exp(Q Kᵀ / √d_k) and its row-sum normaliser, kept as a second,
    independently coded route (it is the oracle the linear-attention kernel
    is checked against);
  * ``exact_unidirectional`` — the causal variant: A is masked to its lower
    triangle before normalising, so row i attends only to positions <= i.

All three stabilise with a per-row max subtraction, which leaves the result
unchanged (softmax shift invariance) while keeping exp() in range.  The max
is treated as a constant in the backward pass; the shift invariance makes
that exact, not an approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    """Dimensions of a multi-head self-attention layer."""

    d_model: int
    h: int
    d_k: int
    d_v: int
    causal: bool = False

    def __post_init__(self):
        if min(self.d_model, self.h, self.d_k, self.d_v) <= 0:
            raise ConfigError("attention dimensions must be positive")
        if self.h * self.d_k != self.d_model:
            raise ConfigError(f"h*d_k = {self.h * self.d_k} != d_model = {self.d_model}")
        if self.h * self.d_v != self.d_model:
            raise ConfigError(f"h*d_v = {self.h * self.d_v} != d_model = {self.d_model}")

    @staticmethod
    def for_model(d_model: int, h: int, causal: bool = False) -> "AttentionConfig":
        if d_model % h != 0:
            raise ConfigError(f"d_model = {d_model} not divisible by h = {h}")
        return AttentionConfig(d_model, h, d_model // h, d_model // h, causal)


@dataclass
class AttentionWeights:
    """Per-head projections plus the output matrix."""

    w_q: list  # h tensors, each (d_model, d_k)
    w_k: list  # h tensors, each (d_model, d_k)
    w_v: list  # h tensors, each (d_model, d_v)
    w_o: Tensor  # (h*d_v, d_model)

    def check(self, cfg: AttentionConfig) -> None:
        if not (len(self.w_q) == len(self.w_k) == len(self.w_v) == cfg.h):
            raise ConfigError("head count does not match weights")
        for w, d in ((self.w_q, cfg.d_k), (self.w_k, cfg.d_k), (self.w_v, cfg.d_v)):
            for t in w:
                if t.shape != (cfg.d_model, d):
                    raise ConfigError(f"projection shape {t.shape} != {(cfg.d_model, d)}")
        if self.w_o.shape != (cfg.h * cfg.d_v, cfg.d_model):
            raise ConfigError("output projection shape mismatch")


def init_attention_weights(cfg: AttentionConfig, rng: np.random.Generator) -> AttentionWeights:
    """Glorot-uniform projections, gradient-tracked."""

    def glorot(fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-lim, lim, size=(fan_in, fan_out)), requires_grad=True)

    return AttentionWeights(
        w_q=[glorot(cfg.d_model, cfg.d_k) for _ in range(cfg.h)],
        w_k=[glorot(cfg.d_model, cfg.d_k) for _ in range(cfg.h)],
        w_v=[glorot(cfg.d_model, cfg.d_v) for _ in range(cfg.h)],
        w_o=glorot(cfg.h * cfg.d_v, cfg.d_model),
    )


def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> None:
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("attention expects rank-2 Q, K, V")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query width {q.shape[1]} != key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key count {k.shape[0]} != value count {v.shape[0]}")
    if q.shape[0] != k.shape[0]:
        raise ShapeError("self-attention requires equal sequence lengths")


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q Kᵀ / √d_k) V."""
    _check_qkv(q, k, v)
    d_k = q.shape[1]
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d_k))
    return T.matmul(T.softmax_rows(scores), v)


def exact_bidirectional(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """D⁻¹ A V with A = exp(Q Kᵀ / √d_k), D = diag(A·1)."""
    _check_qkv(q, k, v)
    d_k = q.shape[1]
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d_k))
    row_max = Tensor(scores.data.max(axis=1, keepdims=True))  # constant shift
    a = T.exp(T.add_rowwise(scores, -row_max))
    d_inv = T.recip(T.rowsum(a))
    return T.scale_rowwise(T.matmul(a, v), d_inv)


def exact_unidirectional(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Causal form: A is masked below the diagonal (inclusive) before normalising."""
    _check_qkv(q, k, v)
    length, d_k = q.shape
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d_k))
    mask = np.tril(np.ones((length, length)))
    # stabilise with the max over the *visible* entries of each row; masked
    # entries are pushed to exp(-800) = 0 exactly, so they never overflow
    # and contribute nothing to the row sums
    visible = np.where(mask > 0, scores.data, -np.inf)
    row_max = Tensor(visible.max(axis=1, keepdims=True))
    shifted = T.add_rowwise(scores, -row_max)
    a = T.exp(T.sub(T.mul(shifted, Tensor(mask)), Tensor((1.0 - mask) * 800.0)))
    d_inv = T.recip(T.rowsum(a))
    return T.scale_rowwise(T.matmul(a, v), d_inv)


def multi_head(x: Tensor, w: AttentionWeights, cfg: AttentionConfig) -> Tensor:
    """Self-attention: h independent heads on projections of x, concatenated
    and mixed by the output matrix."""
    if x.data.ndim != 2 or x.shape[1] != cfg.d_model:
        raise ShapeError(f"input width {x.shape} != d_model {cfg.d_model}")
    w.check(cfg)
    kernel = exact_unidirectional if cfg.causal else scaled_dot_attention
    heads = []
    for i in range(cfg.h):
        q = T.matmul(x, w.w_q[i])
        k = T.matmul(x, w.w_k[i])
        v = T.matmul(x, w.w_v[i])
        heads.append(kernel(q, k, v))
    return T.matmul(T.concat(heads, axis=1), w.w_o)
