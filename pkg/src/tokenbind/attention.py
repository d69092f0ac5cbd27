"""Single-head cross-attention maps and functionals over their columns.

``p`` is the raw N x L map (each latent row is a softmax over text tokens).
``a`` rescales each column of ``p`` to sum to one, giving one distribution
over latent positions per text token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    DegenerateColumn,
    DimensionMismatch,
    NotDistribution,
)
from .numerics import as_matrix, as_vector, softmax_rows

DIST_TOL = 1e-10


@dataclass(frozen=True)
class ProjectionWeights:
    w_q: np.ndarray  # d2 x d
    w_k: np.ndarray  # d1 x d
    w_v: np.ndarray  # d1 x d

    def __post_init__(self):
        object.__setattr__(self, "w_q", as_matrix(self.w_q, "w_q"))
        object.__setattr__(self, "w_k", as_matrix(self.w_k, "w_k"))
        object.__setattr__(self, "w_v", as_matrix(self.w_v, "w_v"))
        d = self.w_q.shape[1]
        if self.w_k.shape[1] != d or self.w_v.shape[1] != d:
            raise DimensionMismatch(
                f"inner dimensions differ: w_q {self.w_q.shape}, w_k {self.w_k.shape}, w_v {self.w_v.shape}"
            )
        if self.w_k.shape[0] != self.w_v.shape[0]:
            raise DimensionMismatch("w_k and w_v must share the text embedding dimension")

    @property
    def d(self) -> int:
        return self.w_q.shape[1]


@dataclass(frozen=True)
class AttentionState:
    p: np.ndarray
    a: np.ndarray

    def column(self, i: int) -> np.ndarray:
        return self.a[:, i]


def attention_logits(h, t, w: ProjectionWeights) -> np.ndarray:
    h = as_matrix(h, "h")
    t = as_matrix(t, "t")
    if h.shape[1] != w.w_q.shape[0]:
        raise DimensionMismatch(f"latents have dim {h.shape[1]}, w_q expects {w.w_q.shape[0]}")
    if t.shape[1] != w.w_k.shape[0]:
        raise DimensionMismatch(f"tokens have dim {t.shape[1]}, w_k expects {w.w_k.shape[0]}")
    q = h @ w.w_q
    k = t @ w.w_k
    return (q @ k.T) / math.sqrt(w.d)


def normalize_columns(p: np.ndarray) -> np.ndarray:
    sums = p.sum(axis=0)
    if np.any(sums <= 0.0):
        raise DegenerateColumn(f"attention column(s) {np.flatnonzero(sums <= 0).tolist()} sum to 0")
    return p / sums


def cross_attention_maps(h, t, w: ProjectionWeights) -> AttentionState:
    p = softmax_rows(attention_logits(h, t, w))
    return AttentionState(p=p, a=normalize_columns(p))


def _distribution(x, name: str) -> np.ndarray:
    v = as_vector(x, name)
    if np.any(v < 0.0) or abs(v.sum() - 1.0) > DIST_TOL:
        raise NotDistribution(f"{name} is not a probability vector (sum={v.sum()!r})")
    return v


def kl_divergence(a_i, a_j) -> float:
    """``sum p log(p/q)`` in nats, with ``0 log 0 = 0``."""
    p = _distribution(a_i, "a_i")
    q = _distribution(a_j, "a_j")
    if p.shape != q.shape:
        raise DimensionMismatch(f"lengths {p.size} and {q.size}")
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise AbsoluteContinuityViolation("a_j is zero where a_i has mass")
    ps, qs = p[support], q[support]
    return float(np.sum(ps * (np.log(ps) - np.log(qs))))


def bhattacharyya_coeff(a_m, a_n) -> float:
    p = _distribution(a_m, "a_m")
    q = _distribution(a_n, "a_n")
    if p.shape != q.shape:
        raise DimensionMismatch(f"lengths {p.size} and {q.size}")
    return float(np.sum(np.sqrt(p * q)))


def shannon_entropy(a_k) -> float:
    p = _distribution(a_k, "a_k")
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))
