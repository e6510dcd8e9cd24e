"""Evaluation of generalized primal-dual resolvents.

Lifted points z ∈ H^d and dual points y ∈ H^n are stored as arrays of shape
``(d, m)`` and ``(n, m)``: one row per block. A matrix B then acts on a
lifted point by ordinary matrix multiplication, ``B @ z``.
"""

from __future__ import annotations

import numpy as np

from .linalg import DEFAULT_TOL, as_matrix
from .operators import apply_hat, inclusion_residual
from .representation import InvalidRepresentationError, dependency_stages, gamma_matrix, is_p_kernel


def as_blocks(z, m=None):
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1) if m in (None, 1) else z.reshape(-1, m)
    return z


def matrix_apply(B, z):
    """Blockwise linear combination ``(Bz)_i = Σ_j B_ij z_j``."""
    B = as_matrix(B, "B")
    z = as_blocks(z)
    if B.shape[1] != z.shape[0]:
        raise ValueError(f"matrix has {B.shape[1]} columns but the point has {z.shape[0]} blocks")
    return B @ z


class ResolventSolver:
    """Back-substitution for y = (M + Φ_{A,p})^{-1} x with a fixed kernel.

    The kernel analysis (L = M + Γ_p, dependency stages) is done once, which
    matters when the same splitting is applied many thousands of times.
    """

    def __init__(self, M, p, F=(), tol=DEFAULT_TOL):
        M = as_matrix(M, "M")
        check = is_p_kernel(M, p, F, tol)
        if not check:
            raise InvalidRepresentationError(f"not a p-kernel: {check.violations}")
        self.M, self.p, self.F = M, p, frozenset(F)
        self.L = M + gamma_matrix(p, M.shape[0])
        self.stages = dependency_stages(M, p, tol)
        self.deps = []
        for i in range(M.shape[0]):
            js = [j for j in range(i) if abs(self.L[i, j]) > tol.residual_tol]
            self.deps.append((js, self.L[i, js]))

    def solve(self, T, x, rng=None):
        """Solve stage by stage; ``rng`` shuffles the order inside each stage."""
        if T.n != self.M.shape[0]:
            raise ValueError(f"tuple has {T.n} operators, kernel is {self.M.shape[0]}x{self.M.shape[0]}")
        if T.F != self.F:
            raise ValueError(f"tuple forward set {sorted(T.F)} differs from {sorted(self.F)}")
        x = as_blocks(x, T.m)
        y = np.zeros_like(x)
        for stage in self.stages:
            order = sorted(stage)
            if rng is not None:
                rng.shuffle(order)
            for i in order:
                js, coeffs = self.deps[i - 1]
                rhs = x[i - 1].copy()
                # Fixed index order keeps the sum bitwise reproducible.
                for j, c in zip(js, coeffs):
                    rhs -= c * y[j]
                y[i - 1] = apply_hat(T[i], i == self.p, self.L[i - 1, i - 1], rhs)
        return y


def pd_resolvent_solve(M, p, T, x, tol=DEFAULT_TOL, rng=None):
    """The unique y with x ∈ (M + Φ_{A,p}) y."""
    return ResolventSolver(M, p, T.F, tol).solve(T, x, rng=rng)


class Stepper:
    """One application of T_A for a fixed representation."""

    def __init__(self, rep, tol=DEFAULT_TOL):
        self.rep = rep
        self.solver = ResolventSolver(rep.M, rep.p, rep.F, tol)
        self.I_minus_U = np.eye(rep.d) - rep.U

    def __call__(self, T, z, rng=None):
        if T.n != self.rep.n:
            raise ValueError(f"tuple has {T.n} operators, representation expects {self.rep.n}")
        z = as_blocks(z, T.m)
        if z.shape != (self.rep.d, T.m):
            raise ValueError(f"point has shape {z.shape}, expected {(self.rep.d, T.m)}")
        y = self.solver.solve(T, self.rep.N @ z, rng=rng)
        return self.I_minus_U @ z + self.rep.V @ y, y


def evaluate(rep, T, z, tol=DEFAULT_TOL):
    """Return ``(z_next, y)`` with y = (M + Φ)^{-1} N z and z_next = z − Uz + Vy."""
    return Stepper(rep, tol)(T, z)


def fixed_point_residual(rep, T, z, tol=DEFAULT_TOL):
    z = as_blocks(z, T.m)
    z_next, _ = evaluate(rep, T, z, tol)
    return float(np.linalg.norm(z - z_next))


def solution_from_point(rep, T, z, tol=DEFAULT_TOL):
    """Primal candidate y_p and the residual of 0 ∈ Σ A_i y_p.

    The residual is honest at any z: away from a fixed point it is simply
    large (or infinite if y_p leaves the domain of some operator).
    """
    _, y = evaluate(rep, T, z, tol)
    x = y[rep.p - 1].copy()
    return x, inclusion_residual(T.operators, x, atol=tol.residual_tol)
