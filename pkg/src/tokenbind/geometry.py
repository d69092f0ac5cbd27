"""Token-embedding geometry: distances, norms, angles and norm scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NonPositiveScale, ZeroVector
from .numerics import as_matrix, as_vector


def _pair(t_i, t_j):
    a = as_vector(t_i, "t_i")
    b = as_vector(t_j, "t_j")
    if a.shape != b.shape or a.size == 0:
        raise DimensionMismatch(f"vectors of length {a.size} and {b.size}")
    return a, b


def pairwise_mse(t_i, t_j) -> float:
    """Squared Euclidean distance divided by the embedding dimension."""
    a, b = _pair(t_i, t_j)
    diff = a - b
    return float(np.dot(diff, diff) / a.size)


def cosine_angle(t_i, t_j) -> float:
    """Angle between two nonzero vectors, in radians within ``[0, pi]``."""
    a, b = _pair(t_i, t_j)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("angle undefined for a zero vector")
    cos = float(np.dot(a, b) / (na * nb))
    return float(np.arccos(min(1.0, max(-1.0, cos))))


def scale_embeddings(t, alphas) -> np.ndarray:
    """Multiply row ``k`` of ``t`` by ``alphas[k]``."""
    t = as_matrix(t, "t")
    alphas = as_vector(alphas, "alphas")
    if alphas.size != t.shape[0]:
        raise DimensionMismatch(f"{alphas.size} scales for {t.shape[0]} tokens")
    if np.any(alphas <= 0):
        raise NonPositiveScale("all scale factors must be > 0")
    return t * alphas[:, None]


@dataclass
class GeometrySnapshot:
    norms: list[float]
    mse: list[tuple[tuple[int, int], float]] = field(default_factory=list)
    angles: list[tuple[tuple[int, int], float]] = field(default_factory=list)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [p for p, _ in self.mse]

    def to_dict(self) -> dict:
        return {
            "norms": list(self.norms),
            "mse": [{"pair": list(p), "value": v} for p, v in self.mse],
            "angles": [{"pair": list(p), "value": v} for p, v in self.angles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeometrySnapshot":
        return cls(
            norms=[float(x) for x in d["norms"]],
            mse=[((int(e["pair"][0]), int(e["pair"][1])), float(e["value"])) for e in d["mse"]],
            angles=[((int(e["pair"][0]), int(e["pair"][1])), float(e["value"])) for e in d["angles"]],
        )


def snapshot(t, pairs) -> GeometrySnapshot:
    """Row norms of ``t`` plus MSE and angle for each index pair."""
    t = as_matrix(t, "t")
    n_tokens = t.shape[0]
    pairs = [(int(i), int(j)) for i, j in pairs]
    for i, j in pairs:
        if not (0 <= i < n_tokens and 0 <= j < n_tokens):
            raise IndexOutOfRange(f"pair ({i}, {j}) outside {n_tokens} tokens")
    norms = [float(x) for x in np.linalg.norm(t, axis=1)]
    mse = [((i, j), pairwise_mse(t[i], t[j])) for i, j in pairs]
    angles = [((i, j), cosine_angle(t[i], t[j])) for i, j in pairs]
    return GeometrySnapshot(norms, mse, angles)
