"""Convergence certificates for fixed-point iterations of frugal splittings.

For a factored representation (p, S, U, P) and a symmetric Q, define

    W = QU + (QU)ᵀ − UᵀQU − ½ (PᵀQU − SU)ᵀ B† (PᵀQU − SU),

where B† is diagonal with 1/β_i on the forward set. If the structural
condition (I − I_F)(PᵀQ − S)U = 0 holds and Q, W are positive definite, the
iterates are Fejér monotone with respect to P zer Φ in the Q-norm:

    ‖z_{k+1} − Py‖²_Q ≤ ‖z_k − Py‖²_Q − ‖z_k − Py_k‖²_W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import DEFAULT_TOL, as_matrix


class RankDeficientUError(ValueError):
    """search_Q refuses splittings whose U is singular.

    A rank-deficient U cannot pass the certificate. Such splittings either
    fail to converge in general or reduce to a smaller splitting with
    full-rank U; that reduction is not implemented.
    """


def _betas_dict(betas):
    if betas is None:
        return {}
    if hasattr(betas, "betas"):
        return dict(betas.betas)
    return {int(k): float(v) for k, v in dict(betas).items()}


def beta_dagger(fact, betas):
    """n×n diagonal B† with 1/β_i for i ∈ F and zeros elsewhere."""
    betas = _betas_dict(betas)
    d = np.zeros(fact.n)
    for i in fact.F:
        if i not in betas:
            raise KeyError(f"missing cocoercivity constant beta_{i}")
        beta = betas[i]
        if not beta > 0:
            raise ValueError(f"beta_{i} must be positive")
        d[i - 1] = 0.0 if math.isinf(beta) else 1.0 / beta
    return np.diag(d)


def _forward_mask(fact):
    """I − I_F as a vector."""
    mask = np.ones(fact.n)
    for i in fact.F:
        mask[i - 1] = 0.0
    return mask


def build_W(fact, Q, betas=None):
    Q = as_matrix(Q, "Q")
    U, S, P = fact.U, fact.S, fact.P
    QU = Q @ U
    G = P.T @ QU - S @ U
    return QU + QU.T - U.T @ QU - 0.5 * G.T @ beta_dagger(fact, betas) @ G


def structural_condition(fact, Q):
    """Frobenius norm of (I − I_F)(PᵀQ − S)U."""
    Q = as_matrix(Q, "Q")
    R = _forward_mask(fact)[:, None] * ((fact.P.T @ Q - fact.S) @ fact.U)
    return float(np.linalg.norm(R))


def schur_form(fact, Q, betas=None):
    """Block matrix that is positive definite exactly when W is.

    It is affine in Q, which is what makes the certificate search a
    semidefinite feasibility problem.
    """
    Q = as_matrix(Q, "Q")
    U, S, P = fact.U, fact.S, fact.P
    root = np.sqrt(0.5 * np.diag(beta_dagger(fact, betas)))
    QU = Q @ U
    top_left = QU + QU.T - U.T @ QU
    lower = root[:, None] * ((P.T @ Q - S) @ U)
    return np.block([[top_left, lower.T], [lower, np.eye(fact.n)]])


@dataclass
class ConvergenceCertificate:
    Q: np.ndarray
    W: np.ndarray
    structural_residual: float
    min_eig_Q: float
    min_eig_W: float
    satisfied: bool
    seed: int = None

    def to_dict(self):
        return {
            "Q": np.asarray(self.Q).tolist(),
            "W": np.asarray(self.W).tolist(),
            "structural_residual": self.structural_residual,
            "min_eig_Q": self.min_eig_Q,
            "min_eig_W": self.min_eig_W,
            "satisfied": self.satisfied,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["Q"], dtype=float),
            np.array(data["W"], dtype=float),
            float(data["structural_residual"]),
            float(data["min_eig_Q"]),
            float(data["min_eig_W"]),
            bool(data["satisfied"]),
            data.get("seed"),
        )


def check(fact, Q, betas=None, tol=DEFAULT_TOL):
    Q = as_matrix(Q, "Q")
    W = build_W(fact, Q, betas)
    residual = structural_condition(fact, Q)
    eig_Q = linalg.min_eig_symmetric(Q)
    eig_W = linalg.min_eig_symmetric(W)
    satisfied = (
        residual <= tol.residual_tol
        and eig_Q > tol.eig_tol
        and eig_W > tol.eig_tol
        and np.linalg.norm(Q - Q.T) <= tol.residual_tol
    )
    return ConvergenceCertificate(Q, W, residual, eig_Q, eig_W, bool(satisfied))


# -- certificate search ------------------------------------------------------


def _symmetric_basis(d):
    basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def _lifted_linear_part(fact, E, root):
    """The part of blockdiag(Q, schur_form) that is linear in Q, applied to E."""
    U, P = fact.U, fact.P
    EU = E @ U
    top_left = EU + EU.T - U.T @ EU
    lower = root[:, None] * (P.T @ E @ U)
    schur = np.block([[top_left, lower.T], [lower, np.zeros((fact.n, fact.n))]])
    d = fact.d
    out = np.zeros((d + schur.shape[0],) * 2)
    out[:d, :d] = E
    out[d:, d:] = schur
    return out


def _lifted(fact, Q, betas):
    d = fact.d
    schur = schur_form(fact, Q, betas)
    out = np.zeros((d + schur.shape[0],) * 2)
    out[:d, :d] = Q
    out[d:, d:] = schur
    return out


@dataclass
class SearchOptions:
    restarts: int = 10
    iterations: int = 400
    step: float = 1.0
    seed: int = 0


def search_Q(fact, betas=None, options=None, tol=DEFAULT_TOL):
    """Look for a Q that certifies convergence; ``None`` if none was found.

    Symmetric Q is parameterized by its upper triangle. The structural
    condition is affine in Q, so the search runs on that affine subspace,
    maximizing the smallest eigenvalue of blockdiag(Q, schur_form) by
    subgradient ascent from several seeded starting points. This is a
    heuristic: ``None`` does not prove that no certificate exists.
    """
    options = options or SearchOptions()
    if linalg.rank(fact.U, tol) < fact.d:
        raise RankDeficientUError(
            "U is rank deficient; such a splitting cannot be certified and should be "
            "reduced to one with full-rank U first"
        )
    d = fact.d
    basis = _symmetric_basis(d)
    mask = _forward_mask(fact)[:, None]
    A = np.column_stack([(mask * (fact.P.T @ E @ fact.U)).ravel() for E in basis])
    b = (mask * (fact.S @ fact.U)).ravel()
    q0, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ q0 - b) > tol.residual_tol:
        return None
    Z = linalg.null_space(A, tol)

    def to_Q(q):
        return sum(qk * E for qk, E in zip(q, basis))

    Q0 = to_Q(q0)
    X0 = _lifted(fact, Q0, betas)
    root = np.sqrt(0.5 * np.diag(beta_dagger(fact, betas)))
    directions = [_lifted_linear_part(fact, to_Q(z), root) for z in Z.T]

    def value(c):
        X = X0 + sum(ck * Xk for ck, Xk in zip(c, directions))
        w, v = np.linalg.eigh(X)
        return w[0], v[:, 0]

    rng = np.random.default_rng(options.seed)
    k = Z.shape[1]
    best_c, best_val = np.zeros(k), value(np.zeros(k))[0]
    if k:
        scale = options.step * max(1.0, float(np.linalg.norm(q0)))
        for restart in range(options.restarts):
            c = np.zeros(k) if restart == 0 else rng.normal(scale=scale, size=k)
            for t in range(options.iterations):
                val, v = value(c)
                if val > best_val:
                    best_val, best_c = val, c.copy()
                g = np.array([v @ Xk @ v for Xk in directions])
                norm = np.linalg.norm(g)
                if norm == 0:
                    break
                c = c + scale / np.sqrt(t + 1.0) * g / norm
    Q = to_Q(q0 + Z @ best_c)
    Q = 0.5 * (Q + Q.T)
    cert = check(fact, Q, betas, tol)
    return Q if cert.satisfied else None


# -- Fejér inequality -------------------------------------------------------


def q_norm_sq(Q, x):
    """‖x‖²_Q = Σ_ij Q_ij ⟨x_i, x_j⟩ for a lifted point with blocks as rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return float(np.sum(x * (np.asarray(Q) @ x)))


def fejer_step(Q, W, z_k, z_next, y_k, P, y_star, tol=DEFAULT_TOL):
    """Both sides of ‖z_{k+1} − Py*‖²_Q ≤ ‖z_k − Py*‖²_Q − ‖z_k − Py_k‖²_W."""
    P = as_matrix(P, "P")
    target = P @ np.asarray(y_star, dtype=float).reshape(P.shape[1], -1)
    z_k = np.asarray(z_k, dtype=float).reshape(target.shape)
    z_next = np.asarray(z_next, dtype=float).reshape(target.shape)
    y_k = np.asarray(y_k, dtype=float).reshape(P.shape[1], -1)
    lhs = q_norm_sq(Q, z_next - target)
    rhs = q_norm_sq(Q, z_k - target) - q_norm_sq(W, z_k - P @ y_k)
    return lhs, rhs, bool(lhs <= rhs + tol.residual_tol)
