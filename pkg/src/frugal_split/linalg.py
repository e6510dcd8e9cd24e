"""Dense linear-algebra primitives for small matrices.

Everything here works on ``numpy`` arrays of shape at most ~64 x 64. Ranks,
pseudoinverses and kernel bases all use the same singular-value cutoff,
relative to the largest singular value, so that range and kernel tests agree
with the factorizations built on top of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared by every check in the package.

    rank_tol
        Singular values at or below ``rank_tol * s_max`` count as zero.
    residual_tol
        Frobenius-norm threshold for "this matrix is zero" tests.
    eig_tol
        Margin for strict positivity of eigenvalues.
    """

    rank_tol: float = 1e-10
    residual_tol: float = 1e-9
    eig_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_tol", "residual_tol", "eig_tol"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


DEFAULT_TOL = Tolerance()


class RangeContainmentError(ValueError):
    """Raised when ran A is not contained in ran B."""

    def __init__(self, residual):
        super().__init__(f"range of A is not contained in range of B (residual {residual:.3e})")
        self.residual = residual


class KernelContainmentError(ValueError):
    """Raised when ker B is not contained in ker A."""

    def __init__(self, residual):
        super().__init__(f"kernel of B is not contained in kernel of A (residual {residual:.3e})")
        self.residual = residual


def as_matrix(A, name="matrix"):
    """Convert to a finite 2-D float array, rejecting NaN/Inf."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _cutoff(s, tol):
    return tol.rank_tol * s[0] if s.size and s[0] > 0 else 0.0


def rank(M, tol=DEFAULT_TOL):
    """Numerical rank: singular values above ``rank_tol * s_max``."""
    M = as_matrix(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > _cutoff(s, tol)))


def pinv(B, tol=DEFAULT_TOL):
    """Moore-Penrose pseudoinverse with the package's relative cutoff."""
    B = as_matrix(B)
    if B.size == 0:
        return np.zeros((B.shape[1], B.shape[0]))
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    keep = s > _cutoff(s, tol)
    if s.size == 0 or s[0] == 0:
        keep[:] = False
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def null_space(B, tol=DEFAULT_TOL):
    """Orthonormal basis (as columns) of ker B."""
    B = as_matrix(B)
    n = B.shape[1]
    if B.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(B, full_matrices=True)
    r = 0 if s.size == 0 or s[0] == 0 else int(np.sum(s > _cutoff(s, tol)))
    return vt[r:].T.copy()


def range_basis(B, tol=DEFAULT_TOL):
    """Orthonormal basis (as columns) of ran B."""
    B = as_matrix(B)
    u, s, _ = np.linalg.svd(B, full_matrices=False)
    r = 0 if s.size == 0 or s[0] == 0 else int(np.sum(s > _cutoff(s, tol)))
    return u[:, :r].copy()


def range_projector(B, tol=DEFAULT_TOL):
    """Orthogonal projector onto ran B."""
    Z = range_basis(B, tol)
    return Z @ Z.T


def subset_range(A, B, tol=DEFAULT_TOL):
    """True iff ran A is contained in ran B, tested as rank([B | A]) == rank(B)."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    if not np.any(A):
        return True
    s_b = np.linalg.svd(B, compute_uv=False) if B.size else np.zeros(0)
    if s_b.size == 0 or s_b[0] == 0:
        return False
    # Both ranks use the cutoff of B, so a large A cannot push B's smaller
    # singular values under the threshold and mask a missing direction.
    cutoff = _cutoff(s_b, tol)
    s_ba = np.linalg.svd(np.hstack([B, A]), compute_uv=False)
    return int(np.sum(s_ba > cutoff)) == int(np.sum(s_b > cutoff))


def range_residual(A, B, tol=DEFAULT_TOL):
    """Frobenius norm of the part of A outside ran B."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    return float(np.linalg.norm(A - range_projector(B, tol) @ A))


def kernel_residual(A, B, tol=DEFAULT_TOL):
    """‖A Z‖_F with Z an orthonormal basis of ker B."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    Z = null_space(B, tol)
    if Z.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(A @ Z))


def subset_kernel(A, B, tol=DEFAULT_TOL):
    """True iff ker B is contained in ker A."""
    return kernel_residual(A, B, tol) <= tol.residual_tol


def right_factor(A, B, tol=DEFAULT_TOL):
    """The unique S with A = B S and ran S inside (ker B)^⊥.

    Computed as ``pinv(B) @ A``. Raises :class:`RangeContainmentError` when
    ran A is not contained in ran B.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    S = pinv(B, tol) @ A
    residual = float(np.linalg.norm(A - B @ S))
    if residual > tol.residual_tol:
        raise RangeContainmentError(residual)
    return S


def left_factor(A, B, tol=DEFAULT_TOL):
    """The unique S with A = S B and ker S containing (ran B)^⊥.

    Computed as ``A @ pinv(B)``. Raises :class:`KernelContainmentError` when
    ker B is not contained in ker A.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    S = A @ pinv(B, tol)
    residual = float(np.linalg.norm(A - S @ B))
    if residual > tol.residual_tol:
        raise KernelContainmentError(residual)
    return S


def symmetrize(M):
    M = as_matrix(M)
    return 0.5 * (M + M.T)


def min_eig_symmetric(M):
    """Smallest eigenvalue of (M + Mᵀ)/2."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got {M.shape}")
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def is_lower_triangular(M, tol=DEFAULT_TOL):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got {M.shape}")
    upper = np.triu(M, k=1)
    return bool(np.all(np.abs(upper) <= tol.residual_tol))
