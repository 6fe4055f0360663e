"""Dense complex linear-algebra kernel shared by the other modules.

Everything here is a thin, contract-checked layer over numpy.linalg.  The
matrices in this package are small (at most a few hundred rows/columns),
so dense one-shot factorizations are used throughout.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SvdConvergenceError",
    "vec",
    "unvec",
    "kron",
    "hermitian_check",
    "svd",
    "min_norm_lstsq",
]


class SvdConvergenceError(RuntimeError):
    """The iterative SVD driver failed to converge."""


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for a matrix with the given row count."""
    v = np.asarray(v)
    if v.size % rows != 0:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows} rows")
    return v.reshape(rows, -1, order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; the first operand supplies the block (outer) index."""
    return np.kron(a, b)


def hermitian_check(a: np.ndarray, tol: float) -> bool:
    """True iff the max-norm deviation of ``a`` from its adjoint is within tol."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition a = u @ diag(s) @ vh.

    Returns (u, s, vh) with singular values nonincreasing.  Raises
    SvdConvergenceError if the LAPACK driver does not converge.
    """
    try:
        return np.linalg.svd(np.asarray(a), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(str(exc)) from exc


def min_norm_lstsq(a: np.ndarray, b: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimum-norm least-squares solution of a @ x = b.

    Singular values below ``rank_tol`` times the largest one are treated as
    zero.  Among all least-squares minimizers the returned solution has the
    smallest Euclidean norm.  ``b`` may be a vector or a matrix of stacked
    right-hand sides.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    u, s, vh = svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[1:2] + b.shape[1:], dtype=np.result_type(a, b))
    keep = s > rank_tol * s[0]
    u = u[:, keep]
    vh = vh[keep]
    s = s[keep]
    proj = u.conj().T @ b
    if proj.ndim == 1:
        return vh.conj().T @ (proj / s)
    return vh.conj().T @ (proj / s[:, None])
