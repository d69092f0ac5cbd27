"""Small dense linear-algebra kernels shared by the rest of the package.

Matrices are plain ``numpy.ndarray`` values in float64. Eigendecomposition
uses cyclic Jacobi rotations, which is slow for big matrices but exact
enough (and dependency-free) at the pair/noun-phrase scale used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NearSingular, NoConvergence, NonFiniteError, NotSymmetric

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-12
PD_EPS = 1e-10


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array (copying only if needed)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return m


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def _check_symmetric(a: np.ndarray, tol: float) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {tol:.0e} relative")


def sym_eig(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SymEigResult:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Each sweep visits every off-diagonal pair ``(p, q)`` and applies the
    Givens rotation that zeroes ``a[p, q]``, skipping entries already
    negligible next to ``sqrt(|a[p, p] * a[q, q]|)``. Iteration stops after
    a sweep with no rotations; judging entries against their own diagonal
    (rather than the norm of the whole matrix) keeps small eigenvalues of
    positive-definite inputs accurate to high relative precision.

    Raises:
        NotSymmetric: if ``a`` is not symmetric within ``SYMMETRY_TOL``.
        NoConvergence: if ``max_sweeps`` sweeps end with an off-diagonal
            Frobenius norm above ``tol`` times the norm of the input.
    """
    a = as_matrix(a, "a")
    _check_symmetric(a, SYMMETRY_TOL)
    n = a.shape[0]
    work = 0.5 * (a + a.T)
    vecs = np.eye(n)
    scale = float(np.linalg.norm(work))
    if n < 2 or scale == 0.0:
        return SymEigResult(np.diag(work).copy(), vecs)
    rel = np.finfo(np.float64).eps

    for _ in range(max_sweeps):
        rotations = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                if apq == 0.0 or abs(apq) <= rel * np.sqrt(abs(work[p, p] * work[q, q])):
                    continue
                rotations += 1
                theta = (work[q, q] - work[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                work[:, p] = c * col_p - s * col_q
                work[:, q] = s * col_p + c * col_q
                row_p = work[p, :].copy()
                row_q = work[q, :].copy()
                work[p, :] = c * row_p - s * row_q
                work[q, :] = s * row_p + c * row_q
                work[p, q] = work[q, p] = 0.0
                v_p = vecs[:, p].copy()
                v_q = vecs[:, q].copy()
                vecs[:, p] = c * v_p - s * v_q
                vecs[:, q] = s * v_p + c * v_q
        if rotations == 0:
            break
    else:
        off = float(np.linalg.norm(work - np.diag(np.diag(work))))
        if off > tol * scale:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    order = np.argsort(np.diag(work), kind="stable")
    return SymEigResult(np.diag(work)[order].copy(), vecs[:, order].copy())


def inv_sqrt_psd(g, eps: float = PD_EPS) -> np.ndarray:
    """Symmetric inverse square root ``G^{-1/2}`` of a positive-definite matrix.

    Raises:
        NearSingular: if the smallest eigenvalue is ``<= eps``. For Gram
            matrices this means some of the vectors are nearly parallel.
    """
    eig = sym_eig(g)
    lam_min = float(eig.eigenvalues[0]) if eig.eigenvalues.size else np.inf
    if lam_min <= eps:
        raise NearSingular(f"smallest eigenvalue {lam_min:.3e} <= {eps:.0e}")
    v = eig.eigenvectors
    r = (v / np.sqrt(eig.eigenvalues)) @ v.T
    return 0.5 * (r + r.T)


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by Philox-4x64 (a counter-based bit generator).

    The stream depends only on ``seed`` and numpy's Philox definition, so it
    is identical across platforms.
    """
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial seed; results never depend on the order trials run in."""
    return (int(seed) ^ int(trial)) & 0xFFFFFFFFFFFFFFFF
