"""Generalized primal-dual resolvents (p, M, N, U, V) and their calculus.

A representation describes the splitting operator

    y = (M + Φ_{A,p})^{-1} N z,        T_A z = z − U z + V y,

where Φ_{A,p} = Δ_{A,p} + Γ_p. Indices follow the mathematical convention:
``p`` and the forward set ``F`` are 1-based, so for a 3-operator problem with
a forward step on the middle operator, ``F = {2}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import DEFAULT_TOL, as_matrix


class InvalidPrimalError(ValueError):
    """The primal index p was placed in the forward set."""


class InvalidRepresentationError(ValueError):
    """A representation failed one of the validity conditions."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _index_set(F):
    return frozenset(int(i) for i in (F or ()))


def gamma_matrix(p, n):
    """Γ_p = R_p − R_pᵀ, where R_p has ones on row p (1-based)."""
    if not 1 <= p <= n:
        raise IndexError(f"p={p} outside 1..{n}")
    G = np.zeros((n, n))
    G[p - 1, :] = 1.0
    G[:, p - 1] = -1.0
    G[p - 1, p - 1] = 0.0
    return G


@dataclass
class KernelCheck:
    """Outcome of :func:`is_p_kernel`; truthy iff the matrix is a p-kernel."""

    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def is_p_kernel(M, p, F=(), tol=DEFAULT_TOL):
    """Check that M + Γ_p is lower triangular and the diagonal pattern matches F.

    Violations are reported as ``(reason, (i, j), value)`` with 1-based
    positions.
    """
    F = _index_set(F)
    if p in F:
        raise InvalidPrimalError(f"primal index {p} is in the forward set")
    M = as_matrix(M, "M")
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"kernel must be square, got {M.shape}")
    L = M + gamma_matrix(p, n)
    eps = tol.residual_tol
    violations = []
    for i, j in zip(*np.nonzero(np.abs(np.triu(L, 1)) > eps)):
        violations.append(("upper triangle of M + Γ_p", (i + 1, j + 1), float(L[i, j])))
    for i in range(n):
        v = float(M[i, i])
        if v < -eps:
            violations.append(("negative diagonal", (i + 1, i + 1), v))
        elif (i + 1) in F and abs(v) > eps:
            violations.append(("nonzero diagonal on a forward index", (i + 1, i + 1), v))
        elif (i + 1) not in F and v <= eps:
            violations.append(("zero diagonal outside the forward set", (i + 1, i + 1), v))
    return KernelCheck(not violations, violations)


@dataclass
class Representation:
    """The tuple (p, M, N, U, V) together with the forward set F."""

    p: int
    M: np.ndarray
    N: np.ndarray
    U: np.ndarray
    V: np.ndarray
    F: frozenset = frozenset()

    def __post_init__(self):
        self.M = as_matrix(self.M, "M")
        self.N = as_matrix(self.N, "N")
        self.U = as_matrix(self.U, "U")
        self.V = as_matrix(self.V, "V")
        self.F = _index_set(self.F)
        self.p = int(self.p)
        n, d = self.M.shape[0], self.U.shape[0]
        if self.N.shape == (1, n) and n > 1 and d == 1:
            self.N = self.N.T
        expected = {"M": (n, n), "N": (n, d), "U": (d, d), "V": (d, n)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not 1 <= self.p <= n:
            raise IndexError(f"p={self.p} outside 1..{n}")
        if self.p in self.F:
            raise InvalidPrimalError(f"primal index {self.p} is in the forward set")
        if not self.F <= set(range(1, n + 1)):
            raise ValueError("forward set outside 1..n")

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def L(self):
        return self.M + gamma_matrix(self.p, self.n)


@dataclass
class FactoredRepresentation:
    """(p, S, U, P) with M = SUP, N = SU and V = UP."""

    p: int
    S: np.ndarray
    U: np.ndarray
    P: np.ndarray
    F: frozenset = frozenset()

    def __post_init__(self):
        self.S = as_matrix(self.S, "S")
        self.U = as_matrix(self.U, "U")
        self.P = as_matrix(self.P, "P")
        if self.S.shape[0] == 1 and self.S.shape[1] > 1 and self.U.shape == (1, 1):
            self.S = self.S.T
        self.F = _index_set(self.F)
        self.p = int(self.p)

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def d(self):
        return self.U.shape[0]


@dataclass
class ValidationReport:
    kernel_ok: bool
    kernel_violations: list
    cond_ii_ok: bool
    cond_iii_ok: bool
    residuals: dict

    @property
    def valid(self):
        return self.kernel_ok and self.cond_ii_ok and self.cond_iii_ok

    def __bool__(self):
        return self.valid

    def summary(self):
        lines = [
            f"valid: {self.valid}",
            f"(i)   p-kernel:              {self.kernel_ok}",
            f"(ii)  ker[N -M] ⊇ ker[U -V]: {self.cond_ii_ok} (residual {self.residuals['cond_ii']:.3e})",
            f"(iii) ran U ⊇ ran V:         {self.cond_iii_ok} (residual {self.residuals['cond_iii']:.3e})",
        ]
        for reason, pos, value in self.kernel_violations:
            lines.append(f"      kernel violation at {pos}: {reason} ({value:.3e})")
        return "\n".join(lines)


def validate(rep, tol=DEFAULT_TOL):
    """Check the three conditions that make (p, M, N, U, V) a frugal splitting."""
    kernel = is_p_kernel(rep.M, rep.p, rep.F, tol)
    lhs = np.hstack([rep.N, -rep.M])
    rhs = np.hstack([rep.U, -rep.V])
    res_ii = linalg.kernel_residual(lhs, rhs, tol)
    cond_iii = linalg.subset_range(rep.V, rep.U, tol)
    res_iii = linalg.range_residual(rep.V, rep.U, tol)
    return ValidationReport(
        kernel_ok=kernel.ok,
        kernel_violations=kernel.violations,
        cond_ii_ok=res_ii <= tol.residual_tol,
        cond_iii_ok=cond_iii,
        residuals={"cond_ii": res_ii, "cond_iii": res_iii},
    )


def factorize(rep, tol=DEFAULT_TOL):
    """Split a valid representation into (p, S, U, P)."""
    report = validate(rep, tol)
    if not report.valid:
        raise InvalidRepresentationError("cannot factor an invalid representation", report)
    P = linalg.right_factor(rep.V, rep.U, tol)
    S = linalg.left_factor(rep.N, rep.U, tol)
    residual = float(np.linalg.norm(rep.M - S @ rep.V))
    if residual > tol.residual_tol:
        raise InvalidRepresentationError(f"M differs from S V by {residual:.3e}", report)
    return FactoredRepresentation(rep.p, S, rep.U.copy(), P, rep.F)


def compose(p, S, U, P, F=(), tol=DEFAULT_TOL):
    """Assemble (p, SUP, SU, U, UP), checking the factorization conditions."""
    fact = FactoredRepresentation(p, S, U, P, F)
    S, U, P = fact.S, fact.U, fact.P
    n, d = S.shape
    if U.shape != (d, d) or P.shape != (d, n):
        raise ValueError("inconsistent shapes for S, U, P")
    row_proj = linalg.range_projector(U.T, tol)
    col_proj = linalg.range_projector(U, tol)
    if np.linalg.norm(P - row_proj @ P) > tol.residual_tol:
        raise InvalidRepresentationError("ran P is not inside (ker U)^⊥")
    if np.linalg.norm(S - S @ col_proj) > tol.residual_tol:
        raise InvalidRepresentationError("ker S does not contain (ran U)^⊥")
    M = S @ U @ P
    check = is_p_kernel(M, fact.p, fact.F, tol)
    if not check:
        raise InvalidRepresentationError(f"SUP is not a p-kernel: {check.violations}")
    rep = Representation(fact.p, M, S @ U, U, U @ P, fact.F)
    assert validate(rep, tol).valid
    return rep


def kernel_bases(M, tol=DEFAULT_TOL):
    """Orthonormal K (n×d) with ran K = (ker M)^⊥ and H (d×n) with ker H = (ran M)^⊥.

    Both come from the thin SVD M = U_r Σ_r V_rᵀ with d = rank M, as K = V_r
    and H = U_rᵀ, so HMK = Σ_r. Signs are fixed so that the largest entry
    of each column of K is positive.
    """
    M = as_matrix(M, "M")
    d = linalg.rank(M, tol)
    left, _, right_t = np.linalg.svd(M)
    K = right_t[:d].T.copy()
    H = left[:, :d].T.copy()
    for j in range(d):
        if K[np.argmax(np.abs(K[:, j])), j] < 0:
            K[:, j] *= -1
            H[j] *= -1
    return K, H


def from_kernel(M, p, F=(), tol=DEFAULT_TOL):
    """Build (p, M, MK, HMK, HM) from a p-kernel M.

    K and H come from :func:`kernel_bases`. Picking rows and columns of M
    instead would also work, but then U = HMK has roughly the cube of the
    condition number of M, which makes factoring unreliable.
    """
    M = as_matrix(M, "M")
    check = is_p_kernel(M, p, F, tol)
    if not check:
        raise InvalidRepresentationError(f"not a p-kernel: {check.violations}")
    K, H = kernel_bases(M, tol)
    return Representation(p, M, M @ K, H @ M @ K, H @ M, F)


def from_kernel_with(M, K, H, p, F=(), tol=DEFAULT_TOL):
    """(p, M, MK, HMK, HM) for caller-supplied K and H."""
    M, K, H = as_matrix(M, "M"), as_matrix(K, "K"), as_matrix(H, "H")
    check = is_p_kernel(M, p, F, tol)
    if not check:
        raise InvalidRepresentationError(f"not a p-kernel: {check.violations}")
    return Representation(p, M, M @ K, H @ M @ K, H @ M, F)


def minimal_lifting(n, F=()):
    """Smallest lifting d of a frugal splitting over n operators with forward set F.

    This is n − 1 − |F| when neither end is a forward index and one more for
    each end that is. The "one more" for both ends at once is forced: with
    1 ∈ F and n ∈ F every p-kernel has a fixed nonzero minor of size
    n + 1 − |F| (see ``tests/test_representation.py``).
    """
    F = _index_set(F)
    if n < 2:
        raise ValueError("need at least two operators")
    if not F <= set(range(1, n + 1)):
        raise ValueError("forward set outside 1..n")
    if len(F) >= n:
        raise ValueError("the forward set cannot contain every index")
    return n - 1 - len(F) + (1 in F) + (n in F)


def minimal_kernel(n, F=(), p=None, tol=DEFAULT_TOL):
    """A p-kernel whose rank equals :func:`minimal_lifting`.

    Write the kernel with the primal row and column moved last, so that the
    leading block B is lower triangular with unit diagonal outside F. Its
    rank is then at least the number of non-forward, non-primal indices.
    The free lower-triangular entries are used to put the primal column in
    ran B (copying row 1 into forward rows above p) and the primal row in
    the row space of B (collecting forward columns after p into row n).
    When both succeed the primal diagonal is chosen to match, and the rank
    does not grow at all.
    """
    F = _index_set(F)
    if p is None:
        p = max(set(range(1, n + 1)) - F)
    if p in F:
        raise InvalidPrimalError(f"primal index {p} is in the forward set")
    target = minimal_lifting(n, F)
    q = p - 1
    forward = {i - 1 for i in F}
    M = np.zeros((n, n))
    M[:q, q] = 1.0
    M[q, q + 1:] = -1.0
    for i in range(n):
        if i not in forward and i != q:
            M[i, i] = 1.0
    M[q, q] = 1.0
    first_free = 0 not in forward
    last_free = (n - 1) not in forward
    if first_free and q > 0:
        for i in forward:
            if i < q:
                M[i, 0] = 1.0
    if last_free and q < n - 1:
        for j in forward:
            if j > q:
                M[n - 1, j] = 1.0
    if first_free and last_free:
        if q < n - 1:
            M[n - 1, q] = -1.0
        else:
            M[q, 0] = 1.0
    got = linalg.rank(M, tol)
    assert is_p_kernel(M, p, F, tol), "minimal_kernel produced an invalid kernel"
    assert got == target, f"minimal_kernel rank {got} != minimal lifting {target}"
    return M


def dependency_stages(M, p, tol=DEFAULT_TOL):
    """Group indices into stages that can be evaluated in parallel.

    Index i depends on j < i when L_ij ≠ 0 with L = M + Γ_p. Stage k holds
    the indices whose longest dependency chain has length k.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    L = M + gamma_matrix(p, n)
    if not linalg.is_lower_triangular(L, tol):
        raise InvalidRepresentationError("M + Γ_p is not lower triangular")
    level = [0] * n
    for i in range(n):
        deps = [level[j] + 1 for j in range(i) if abs(L[i, j]) > tol.residual_tol]
        level[i] = max(deps, default=0)
    stages = [set() for _ in range(max(level) + 1)]
    for i, lv in enumerate(level):
        stages[lv].add(i + 1)
    return stages


def step_sizes(M, p, F=None, tol=DEFAULT_TOL):
    """Effective resolvent step per index; ``None`` on forward indices.

    Dual indices use L_ii and the primal index uses 1/L_pp. When F is not
    given it is read off the zero diagonal of M.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if F is None:
        F = {i + 1 for i in range(n) if abs(M[i, i]) <= tol.residual_tol}
    check = is_p_kernel(M, p, F, tol)
    if not check:
        raise InvalidRepresentationError(f"not a p-kernel: {check.violations}")
    L = M + gamma_matrix(p, n)
    steps = {}
    for i in range(1, n + 1):
        if i in F:
            steps[i] = None
        elif i == p:
            steps[i] = 1.0 / L[i - 1, i - 1]
        else:
            steps[i] = float(L[i - 1, i - 1])
    return steps


def rescaled(rep, lam):
    """Representation over A of the splitting ``rep`` applied to λA.

    With D = diag(1/λ off p, 1 at p) and E = diag(1 off p, 1/λ at p), the
    substitution y ↦ D y turns (M + Φ_{λA,p}) into E (M + Φ_{A,p}) D^{-1},
    because E Γ_p D^{-1} = Γ_p.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    n = rep.n
    D = np.full(n, 1.0 / lam)
    D[rep.p - 1] = 1.0
    E = np.ones(n)
    E[rep.p - 1] = 1.0 / lam
    return Representation(
        rep.p,
        E[:, None] * rep.M / D[None, :],
        E[:, None] * rep.N,
        rep.U.copy(),
        rep.V / D[None, :],
        rep.F,
    )


# -- JSON ---------------------------------------------------------------------


def representation_to_dict(rep):
    return {
        "p": rep.p,
        "F": sorted(rep.F),
        "M": rep.M.tolist(),
        "N": rep.N.tolist(),
        "U": rep.U.tolist(),
        "V": rep.V.tolist(),
    }


def representation_from_dict(data, tol=DEFAULT_TOL):
    """Load ``{p, F, M, N, U, V}``, or build from the kernel form ``{p, F, M}``."""
    p = int(data["p"])
    F = _index_set(data.get("F", []))
    M = np.array(data["M"], dtype=float)
    if all(k not in data for k in ("N", "U", "V")):
        return from_kernel(M, p, F, tol)
    missing = [k for k in ("N", "U", "V") if k not in data]
    if missing:
        raise KeyError(f"representation is missing {missing}")
    return Representation(p, M, np.array(data["N"], dtype=float), np.array(data["U"], dtype=float),
                          np.array(data["V"], dtype=float), F)
