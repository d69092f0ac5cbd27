"""Orthogonalization of token embeddings across noun-phrase boundaries.

Causal encoders get Schmidt projection-out: each later phrase's tokens lose
their components along earlier phrases' (already transformed) tokens, and
the first phrase is never touched. Non-causal encoders get Löwdin symmetric
orthogonalization applied jointly to the selected tokens of every phrase.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NearSingular, ZeroReference
from .numerics import as_matrix, as_vector, inv_sqrt_psd
from .prompt import PromptAnnotation

ZERO_REF_TOL = 1e-12
DEGENERATE_TOL = 1e-10


class CausalityMode(str, enum.Enum):
    CAUSAL = "causal"
    NONCAUSAL = "noncausal"


class TokenSet(str, enum.Enum):
    OBJECTS = "objects"
    ALL = "all"


class Projection(NamedTuple):
    vector: np.ndarray
    degenerate: bool


def schmidt_project_out(w, u_set, strict_complement: bool = False) -> Projection:
    """Remove from ``w`` its projection onto each reference in ``u_set``.

    By default every projection is taken against the raw reference and the
    results are summed, which is exact only when the references are
    mutually orthogonal. ``strict_complement=True`` projects onto the
    orthogonal complement of ``span(u_set)`` instead (references are first
    orthonormalized by modified Gram-Schmidt).

    The ``degenerate`` flag is set when the result is numerically zero
    relative to ``w``.
    """
    w = as_vector(w, "w")
    refs = [as_vector(u, "u") for u in u_set]
    for u in refs:
        if u.shape != w.shape:
            raise DimensionMismatch(f"reference of length {u.size}, expected {w.size}")
        if np.linalg.norm(u) < ZERO_REF_TOL:
            raise ZeroReference("reference vector has (near) zero norm")

    out = w.copy()
    if strict_complement:
        basis = []
        for u in refs:
            v = u.copy()
            for b in basis:
                v -= np.dot(v, b) * b
            nv = np.linalg.norm(v)
            if nv > DEGENERATE_TOL * np.linalg.norm(u):
                basis.append(v / nv)
        for b in basis:
            out -= np.dot(out, b) * b
    else:
        for u in refs:
            out -= (np.dot(w, u) / np.dot(u, u)) * u

    nw = np.linalg.norm(w)
    degenerate = bool(np.linalg.norm(out) < DEGENERATE_TOL * nw) if nw > 0 else True
    return Projection(out, degenerate)


def lowdin_orthogonalize(x) -> np.ndarray:
    """Symmetric orthogonalization ``X (X^T X)^{-1/2}`` of the columns of ``x``.

    Raises:
        NearSingular: if the Gram matrix is (nearly) rank deficient.
    """
    x = as_matrix(x, "x")
    if x.shape[1] < 2:
        raise DimensionMismatch("need at least two columns")
    gram = x.T @ x
    return x @ inv_sqrt_psd(0.5 * (gram + gram.T))


@dataclass
class CapoResult:
    embeddings: np.ndarray
    events: list[dict] = field(default_factory=list)


def _selected(np_, token_set: TokenSet) -> list[int]:
    return [np_.object_index] if token_set is TokenSet.OBJECTS else np_.indices


def _most_parallel_pair(cols: np.ndarray, owners: list[int]) -> tuple[int, int]:
    unit = cols / np.maximum(np.linalg.norm(cols, axis=0), 1e-300)
    cos = np.abs(unit.T @ unit)
    np.fill_diagonal(cos, -1.0)
    i, j = np.unravel_index(int(np.argmax(cos)), cos.shape)
    return tuple(sorted((owners[i], owners[j])))


def apply_capo(
    t,
    annotation: PromptAnnotation,
    mode: CausalityMode | str = CausalityMode.CAUSAL,
    *,
    token_set: TokenSet | str = TokenSet.OBJECTS,
    strict_complement: bool = False,
) -> CapoResult:
    """Orthogonalize the selected tokens of different noun phrases.

    ``token_set`` picks which tokens of each phrase take part: only the
    head noun (default) or every token of the span. Tokens that do not take
    part are returned unchanged. A degenerate projection keeps the original
    token and is logged in ``events``.
    """
    mode = CausalityMode(mode)
    token_set = TokenSet(token_set)
    t = as_matrix(t, "t")
    if t.shape[0] != annotation.token_count:
        raise DimensionMismatch(f"{t.shape[0]} token rows, annotation has {annotation.token_count}")
    out = t.copy()
    events: list[dict] = []
    if len(annotation.nps) < 2:
        return CapoResult(out, events)

    if mode is CausalityMode.CAUSAL:
        for k, np_ in enumerate(annotation.nps[1:], start=1):
            refs = [(m, i) for m, prev in enumerate(annotation.nps[:k]) for i in _selected(prev, token_set)]
            ref_vecs = [out[i] for _, i in refs]
            for i in _selected(np_, token_set):
                try:
                    proj = schmidt_project_out(t[i], ref_vecs, strict_complement)
                except ZeroReference:
                    bad = next(m for m, j in refs if np.linalg.norm(out[j]) < ZERO_REF_TOL)
                    raise ZeroReference(f"zero reference token in NP {bad} while projecting NP {k}") from None
                if proj.degenerate:
                    events.append({"event": "degenerate_projection", "np": k, "token": i})
                else:
                    out[i] = proj.vector
        return CapoResult(out, events)

    owners = [m for m, np_ in enumerate(annotation.nps) for _ in _selected(np_, token_set)]
    idx = [i for np_ in annotation.nps for i in _selected(np_, token_set)]
    cols = t[idx].T
    if len(idx) > t.shape[1]:
        raise NearSingular(f"{len(idx)} tokens cannot be orthonormal in dimension {t.shape[1]}")
    try:
        out[idx] = lowdin_orthogonalize(cols).T
    except NearSingular as exc:
        a, b = _most_parallel_pair(cols, owners)
        raise NearSingular(f"{exc}; most parallel tokens belong to NPs {a} and {b}") from None
    return CapoResult(out, events)

