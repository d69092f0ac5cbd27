"""Per-phrase token mixing: ``V* = M V`` for the stacked token rows of each NP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SizeMismatch
from .numerics import as_matrix
from .prompt import PromptAnnotation

DEFAULT_CLAMP = 2.0
TOME_ALPHA = 1.1
TOME_BETA = 1.2


@dataclass
class MixingSet:
    """One square mixing matrix per noun phrase, in annotation order."""

    matrices: list[np.ndarray]
    clamp_bound: float = DEFAULT_CLAMP

    def __post_init__(self):
        if not self.clamp_bound > 0:
            raise ConfigError("clamp_bound must be > 0")
        self.matrices = [as_matrix(m, "mixing matrix") for m in self.matrices]
        for m in self.matrices:
            if m.shape[0] != m.shape[1]:
                raise SizeMismatch(f"mixing matrix must be square, got {m.shape}")

    def copy(self) -> "MixingSet":
        return MixingSet([m.copy() for m in self.matrices], self.clamp_bound)

    def to_dict(self) -> dict:
        return {"clamp_bound": self.clamp_bound, "matrices": [m.tolist() for m in self.matrices]}


def init_mixing(annotation: PromptAnnotation, clamp_bound: float = DEFAULT_CLAMP) -> MixingSet:
    return MixingSet([np.eye(np_.size) for np_ in annotation.nps], clamp_bound)


def _check_sizes(annotation: PromptAnnotation, m: MixingSet) -> None:
    if len(m.matrices) != len(annotation.nps):
        raise SizeMismatch(f"{len(m.matrices)} mixing matrices for {len(annotation.nps)} noun phrases")
    for k, (np_, mat) in enumerate(zip(annotation.nps, m.matrices)):
        if mat.shape != (np_.size, np_.size):
            raise SizeMismatch(f"NP {k} has {np_.size} tokens but mixing matrix is {mat.shape}")


def apply_mixing(t, annotation: PromptAnnotation, m: MixingSet) -> np.ndarray:
    """Replace each NP's token rows ``V`` by ``M V``; other rows are copied."""
    t = as_matrix(t, "t")
    if t.shape[0] != annotation.token_count:
        raise SizeMismatch(f"{t.shape[0]} token rows, annotation has {annotation.token_count}")
    _check_sizes(annotation, m)
    out = t.copy()
    for np_, mat in zip(annotation.nps, m.matrices):
        out[np_.start:np_.end] = mat @ t[np_.start:np_.end]
    return out


def clamp_mixing(m: MixingSet) -> MixingSet:
    c = m.clamp_bound
    return MixingSet([np.clip(mat, -c, c) for mat in m.matrices], c)


def tome_merge_matrix(n: int, alpha: float = TOME_ALPHA, beta: float = TOME_BETA) -> np.ndarray:
    """Fixed 1 x n merge row ``[alpha, beta, ..., beta]``, object token first."""
    if n < 1:
        raise SizeMismatch("an NP has at least one token")
    row = np.full((1, n), float(beta))
    row[0, 0] = alpha
    return row


def tome_mixing_set(
    annotation: PromptAnnotation,
    alpha: float = TOME_ALPHA,
    beta: float = TOME_BETA,
    clamp_bound: float = DEFAULT_CLAMP,
) -> MixingSet:
    """Mixing set whose object rows hold the merged NP token.

    The object row of each matrix gets ``alpha`` on the object and ``beta``
    on every attribute; all other rows stay identity. Applying it replaces
    each head noun by ``alpha * object + beta * sum(attributes)``.
    """
    mats = []
    for np_ in annotation.nps:
        mat = np.eye(np_.size)
        order = [np_.object_index] + [i for i in np_.indices if i != np_.object_index]
        merge = tome_merge_matrix(np_.size, alpha, beta)[0]
        row = np.zeros(np_.size)
        for coeff, tok in zip(merge, order):
            row[tok - np_.start] = coeff
        mat[np_.object_index - np_.start] = row
        mats.append(mat)
    return MixingSet(mats, clamp_bound)
