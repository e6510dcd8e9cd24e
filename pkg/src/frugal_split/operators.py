"""Maximally monotone operators on R^m and tuples of them.

Each operator knows how to evaluate itself (when single-valued), its scaled
resolvent ``J_{γA} = (Id + γA)^{-1}``, and the resolvent of its inverse
``J_{γA^{-1}}``. The inverse resolvent is coded directly for every built-in
variant instead of going through the Moreau identity, so the identity can be
used as a genuine test.

Set-valued variants (box normal cones and the ℓ1 subdifferential) have images
that are products of intervals. :meth:`MonotoneOperator.image_bounds` returns
those intervals, which is all that is needed to certify an inclusion
``0 ∈ Σ A_i x`` coordinate by coordinate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import DEFAULT_TOL, as_matrix, min_eig_symmetric, range_basis

UNBOUNDED = math.inf
"""Cocoercivity sentinel for operators where every β > 0 is valid (Zero)."""


class NotSingleValuedError(TypeError):
    """Forward evaluation requested for a set-valued operator."""


class OracleError(RuntimeError):
    """The reference solver could not certify a zero of the sum."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


def _vec(x):
    return np.asarray(x, dtype=float).reshape(-1)


class MonotoneOperator:
    """Base class. Subclasses override the evaluation hooks."""

    single_valued = True
    kind = "abstract"

    @property
    def dim(self):
        """Ambient dimension, or ``None`` if the operator acts on any R^m."""
        return None

    def forward(self, x):
        raise NotSingleValuedError(f"{self.kind} is not single-valued")

    def resolve(self, gamma, x):
        raise NotImplementedError

    def resolve_inverse(self, gamma, x):
        """``J_{γA^{-1}}(x)``. Defaults to the Moreau identity."""
        x = _vec(x)
        return x - gamma * self.resolve(1.0 / gamma, x / gamma)

    def cocoercivity_bound(self):
        return None

    def image_bounds(self, x, atol=0.0):
        """Per-coordinate interval ``[lo, hi]`` containing exactly A x.

        Coordinates of x within ``atol`` of a kink are treated as sitting on
        it. Empty images are encoded as ``lo = +inf, hi = -inf``.
        """
        if not self.single_valued:
            raise NotImplementedError(f"{self.kind} does not expose its image")
        v = self.forward(x)
        return v.copy(), v.copy()

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Zero(MonotoneOperator):
    kind = "zero"

    def forward(self, x):
        return np.zeros_like(_vec(x))

    def resolve(self, gamma, x):
        _check_step(gamma)
        return _vec(x).copy()

    def resolve_inverse(self, gamma, x):
        _check_step(gamma)
        return np.zeros_like(_vec(x))

    def cocoercivity_bound(self):
        return UNBOUNDED

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class AffineMonotone(MonotoneOperator):
    """x ↦ Kx + b with K + Kᵀ positive semidefinite."""

    K: np.ndarray
    b: np.ndarray = None
    kind = "affine"

    def __post_init__(self):
        K = as_matrix(self.K, "K")
        if K.shape[0] != K.shape[1]:
            raise ValueError("K must be square")
        b = np.zeros(K.shape[0]) if self.b is None else _vec(self.b)
        if b.shape != (K.shape[0],):
            raise ValueError("b has the wrong length")
        if min_eig_symmetric(K) < -DEFAULT_TOL.eig_tol * max(1.0, np.abs(K).max()):
            raise ValueError("K + Kᵀ is not positive semidefinite")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.K.shape[0]

    def affine_parts(self):
        return self.K, self.b

    def forward(self, x):
        return self.K @ _vec(x) + self.b

    def resolve(self, gamma, x):
        _check_step(gamma)
        m = self.dim
        return np.linalg.solve(np.eye(m) + gamma * self.K, _vec(x) - gamma * self.b)

    def resolve_inverse(self, gamma, x):
        # y = A((x - y)/γ)  <=>  (K + γI) y = K x + γ b
        _check_step(gamma)
        m = self.dim
        return np.linalg.solve(self.K + gamma * np.eye(m), self.K @ _vec(x) + gamma * self.b)

    def cocoercivity_bound(self):
        return _affine_cocoercivity(self.K)

    def to_dict(self):
        return {"kind": self.kind, "K": self.K.tolist(), "b": self.b.tolist()}


class QuadraticGradient(AffineMonotone):
    """Gradient of ½xᵀPx + qᵀx, i.e. x ↦ Px + q with P symmetric PSD."""

    kind = "quadratic"

    def __init__(self, P, q=None):
        object.__setattr__(self, "K", P)
        object.__setattr__(self, "b", q)
        self.__post_init__()

    def __post_init__(self):
        super().__post_init__()
        if np.linalg.norm(self.K - self.K.T) > DEFAULT_TOL.residual_tol:
            raise ValueError("P must be symmetric")

    @property
    def P(self):
        return self.K

    @property
    def q(self):
        return self.b

    def cocoercivity_bound(self):
        lam_max = float(np.linalg.eigvalsh(self.K)[-1])
        if lam_max <= DEFAULT_TOL.eig_tol:
            return UNBOUNDED
        return 1.0 / lam_max

    def to_dict(self):
        return {"kind": self.kind, "P": self.K.tolist(), "q": self.b.tolist()}


class SkewLinear(AffineMonotone):
    """x ↦ Kx with Kᵀ = −K."""

    kind = "skew"

    def __init__(self, K):
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "b", None)
        self.__post_init__()

    def __post_init__(self):
        super().__post_init__()
        if np.linalg.norm(self.K + self.K.T) > DEFAULT_TOL.residual_tol:
            raise ValueError("K must be skew-symmetric")

    def cocoercivity_bound(self):
        return UNBOUNDED if not np.any(self.K) else None

    def to_dict(self):
        return {"kind": self.kind, "K": self.K.tolist()}


@dataclass(frozen=True, eq=False)
class BoxNormalCone(MonotoneOperator):
    """Normal cone of the box ``{x : lo ≤ x ≤ hi}``."""

    lo: np.ndarray
    hi: np.ndarray
    kind = "box"
    single_valued = False

    def __post_init__(self):
        lo, hi = np.broadcast_arrays(_vec(self.lo), _vec(self.hi))
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo.astype(float).copy())
        object.__setattr__(self, "hi", hi.astype(float).copy())

    @property
    def dim(self):
        return self.lo.size if self.lo.size > 1 else None

    def resolve(self, gamma, x):
        _check_step(gamma)
        return np.clip(_vec(x), self.lo, self.hi)

    def resolve_inverse(self, gamma, x):
        # The inverse is the subdifferential of the support function of the
        # box, whose prox shrinks x toward [γ lo, γ hi].
        _check_step(gamma)
        x = _vec(x)
        lo, hi = np.broadcast_to(self.lo, x.shape), np.broadcast_to(self.hi, x.shape)
        out = np.zeros_like(x)
        above = x > gamma * hi
        below = x < gamma * lo
        out[above] = x[above] - gamma * hi[above]
        out[below] = x[below] - gamma * lo[below]
        return out

    def image_bounds(self, x, atol=0.0):
        x = _vec(x)
        lo, hi = np.broadcast_to(self.lo, x.shape), np.broadcast_to(self.hi, x.shape)
        at_lo = np.abs(x - lo) <= atol
        at_hi = np.abs(x - hi) <= atol
        outside = (x < lo - atol) | (x > hi + atol)
        lower = np.where(at_lo, -np.inf, 0.0)
        upper = np.where(at_hi, np.inf, 0.0)
        lower[outside] = np.inf
        upper[outside] = -np.inf
        return lower, upper

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class L1Subdifferential(MonotoneOperator):
    """Subdifferential of μ‖·‖₁."""

    mu: float
    kind = "l1"
    single_valued = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    def resolve(self, gamma, x):
        _check_step(gamma)
        x = _vec(x)
        return np.sign(x) * np.maximum(np.abs(x) - gamma * self.mu, 0.0)

    def resolve_inverse(self, gamma, x):
        # The inverse is the normal cone of the ℓ∞ ball of radius μ.
        _check_step(gamma)
        return np.clip(_vec(x), -self.mu, self.mu)

    def image_bounds(self, x, atol=0.0):
        x = _vec(x)
        kink = np.abs(x) <= atol
        s = np.sign(x) * self.mu
        return np.where(kink, -self.mu, s), np.where(kink, self.mu, s)

    def to_dict(self):
        return {"kind": self.kind, "mu": float(self.mu)}


@dataclass(frozen=True, eq=False)
class Scaled(MonotoneOperator):
    """λA for a positive scalar λ."""

    lam: float
    inner: MonotoneOperator
    kind = "scaled"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def single_valued(self):
        return self.inner.single_valued

    @property
    def dim(self):
        return self.inner.dim

    def affine_parts(self):
        K, b = self.inner.affine_parts()
        return self.lam * K, self.lam * b

    def forward(self, x):
        return self.lam * self.inner.forward(x)

    def resolve(self, gamma, x):
        _check_step(gamma)
        return self.inner.resolve(self.lam * gamma, x)

    def resolve_inverse(self, gamma, x):
        # (λA)^{-1}(v) = A^{-1}(v/λ), so y = λ J_{(γ/λ)A^{-1}}(x/λ).
        _check_step(gamma)
        return self.lam * self.inner.resolve_inverse(gamma / self.lam, _vec(x) / self.lam)

    def cocoercivity_bound(self):
        beta = self.inner.cocoercivity_bound()
        return None if beta is None else beta / self.lam

    def image_bounds(self, x, atol=0.0):
        lo, hi = self.inner.image_bounds(x, atol)
        return self.lam * lo, self.lam * hi

    def to_dict(self):
        return {"kind": self.kind, "lam": float(self.lam), "inner": self.inner.to_dict()}


class CallbackOperator(MonotoneOperator):
    """User-supplied operator given by callables.

    ``forward(x)`` is required for single-valued use and ``resolvent(gamma, x)``
    for backward use. The inverse resolvent comes from the Moreau identity.
    Maximal monotonicity is the caller's responsibility and is not checked.
    """

    kind = "callback"

    def __init__(self, forward=None, resolvent=None, beta=None, dim=None):
        self._forward = forward
        self._resolvent = resolvent
        self._beta = beta
        self._dim = dim
        self.single_valued = forward is not None

    @property
    def dim(self):
        return self._dim

    def forward(self, x):
        if self._forward is None:
            raise NotSingleValuedError("callback operator has no forward map")
        return _vec(self._forward(_vec(x)))

    def resolve(self, gamma, x):
        if self._resolvent is None:
            raise NotImplementedError("callback operator has no resolvent")
        _check_step(gamma)
        return _vec(self._resolvent(gamma, _vec(x)))

    def cocoercivity_bound(self):
        return self._beta


def _check_step(gamma):
    if not gamma > 0:
        raise ValueError(f"step size must be positive, got {gamma}")


def _affine_cocoercivity(K):
    """Largest β with (K + Kᵀ)/2 ⪰ β KᵀK, or None when no β > 0 works."""
    if not np.any(K):
        return UNBOUNDED
    # Work on (ker K)^⊥: vectors in ker K contribute nothing to either side.
    basis = range_basis(K.T)
    H = basis.T @ (0.5 * (K + K.T)) @ basis
    G = basis.T @ (K.T @ K) @ basis
    beta = float(scipy.linalg.eigh(H, G, eigvals_only=True)[0])
    return beta if beta > DEFAULT_TOL.eig_tol / np.linalg.norm(K, 2) else None


# -- module-level API -------------------------------------------------------


def forward(A, x):
    return A.forward(x)


def resolve(A, gamma, x):
    """The unique y with x ∈ y + γ A y."""
    return A.resolve(gamma, x)


def resolve_inverse_scaled(A, l, x):
    """``(l Id + A^{-1})^{-1} x = l^{-1}(x − J_{lA} x)``."""
    _check_step(l)
    x = _vec(x)
    return (x - A.resolve(l, x)) / l


def apply_hat(A, is_primal, l, x):
    """``(l Id + Â)^{-1} x`` where Â = A on the primal index and A^{-1} elsewhere."""
    x = _vec(x)
    if is_primal:
        if not l > 0:
            raise ValueError("the primal index needs a positive diagonal entry")
        return A.resolve(1.0 / l, x / l)
    if l == 0:
        if not A.single_valued:
            raise NotSingleValuedError(
                f"zero diagonal on a {A.kind} operator would need a forward step"
            )
        return A.forward(x)
    return resolve_inverse_scaled(A, l, x)


def cocoercivity_bound(A):
    return A.cocoercivity_bound()


def is_affine(A):
    try:
        A.affine_parts()
    except (AttributeError, NotImplementedError):
        return False
    return True


# -- operator tuples --------------------------------------------------------


@dataclass
class OperatorTuple:
    """Ordered operators A_1..A_n on R^m with forward set F (1-based).

    ``betas`` maps each forward index to a cocoercivity constant. Missing
    constants are filled from :func:`cocoercivity_bound`. A user constant
    larger than the computed one is kept but recorded in ``beta_conflicts``
    and reported with a warning.
    """

    operators: list
    F: frozenset = frozenset()
    m: int = None
    betas: dict = field(default_factory=dict)
    beta_conflicts: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.operators = list(self.operators)
        n = len(self.operators)
        self.F = frozenset(int(i) for i in self.F)
        if not self.F <= set(range(1, n + 1)):
            raise ValueError(f"forward set {sorted(self.F)} is not inside 1..{n}")
        if len(self.F) >= n:
            raise ValueError("at least one index must be evaluated by a resolvent")
        dims = {A.dim for A in self.operators if A.dim is not None}
        if self.m is None:
            if len(dims) != 1:
                raise ValueError("cannot infer the dimension m; pass it explicitly")
            self.m = dims.pop()
        elif dims - {self.m}:
            raise ValueError(f"operator dimensions {sorted(dims)} disagree with m={self.m}")
        for i in self.F:
            if not self.operators[i - 1].single_valued:
                raise NotSingleValuedError(f"operator {i} is in F but is set-valued")
        betas = {int(k): float(v) for k, v in self.betas.items()}
        if set(betas) - self.F:
            raise ValueError("betas given for indices outside F")
        for i in sorted(self.F):
            bound = self.operators[i - 1].cocoercivity_bound()
            if i not in betas:
                if bound is None:
                    raise ValueError(f"operator {i} is not cocoercive and no beta was given")
                betas[i] = bound
            elif bound is not None and betas[i] > bound * (1 + 1e-9):
                self.beta_conflicts[i] = bound
                warnings.warn(
                    f"beta_{i}={betas[i]:g} exceeds the computed cocoercivity bound {bound:g}",
                    stacklevel=2,
                )
            elif bound is None:
                self.beta_conflicts[i] = None
                warnings.warn(f"operator {i} does not look cocoercive; using beta_{i}={betas[i]:g}", stacklevel=2)
            if not betas[i] > 0:
                raise ValueError(f"beta_{i} must be positive")
        self.betas = betas

    @property
    def n(self):
        return len(self.operators)

    def __getitem__(self, i):
        """1-based access, matching the index convention of F."""
        return self.operators[i - 1]

    def beta_dagger(self):
        """n×n diagonal matrix with 1/β_i on F and zeros elsewhere."""
        d = np.zeros(self.n)
        for i in self.F:
            beta = self.betas[i]
            d[i - 1] = 0.0 if math.isinf(beta) else 1.0 / beta
        return np.diag(d)

    def scaled(self, lam):
        """The tuple λA, with cocoercivity constants divided by λ."""
        return OperatorTuple(
            [Scaled(lam, A) for A in self.operators],
            self.F,
            self.m,
            {i: b / lam for i, b in self.betas.items()},
        )

    def to_dict(self):
        return {
            "m": int(self.m),
            "operators": [A.to_dict() for A in self.operators],
            "F": sorted(self.F),
            "betas": {str(i): b for i, b in sorted(self.betas.items())},
        }


def operator_from_dict(spec, m=None):
    kind = spec["kind"]
    if kind == "zero":
        return Zero()
    if kind == "affine":
        return AffineMonotone(np.array(spec["K"], dtype=float), spec.get("b"))
    if kind == "quadratic":
        return QuadraticGradient(np.array(spec["P"], dtype=float), spec.get("q"))
    if kind == "skew":
        return SkewLinear(np.array(spec["K"], dtype=float))
    if kind == "box":
        lo, hi = spec["lo"], spec["hi"]
        if m is not None:
            lo, hi = np.broadcast_to(lo, (m,)), np.broadcast_to(hi, (m,))
        return BoxNormalCone(lo, hi)
    if kind == "l1":
        return L1Subdifferential(float(spec["mu"]))
    if kind == "scaled":
        return Scaled(float(spec["lam"]), operator_from_dict(spec["inner"], m))
    raise ValueError(f"unknown operator kind {kind!r}")


def tuple_from_dict(data):
    m = int(data["m"]) if "m" in data else None
    ops = [operator_from_dict(s, m) for s in data["operators"]]
    betas = {int(k): float(v) for k, v in (data.get("betas") or {}).items()}
    return OperatorTuple(ops, frozenset(int(i) for i in data.get("F", [])), m, betas)


# -- certificates and the reference solver ------------------------------------


def sum_image_bounds(operators, x, atol=0.0):
    lo = np.zeros_like(_vec(x))
    hi = np.zeros_like(lo)
    for A in operators:
        a, b = A.image_bounds(x, atol)
        lo = lo + a
        hi = hi + b
    return lo, hi


def inclusion_residual(operators, x, atol=0.0):
    """min ‖Σ u_i‖ over u_i ∈ A_i x, coordinates within ``atol`` of kinks snapped.

    Returns ``inf`` when some A_i x is empty.
    """
    lo, hi = sum_image_bounds(operators, x, atol)
    if np.any(lo > hi):
        return math.inf
    gap = np.maximum(lo, 0.0) + np.minimum(hi, 0.0)
    return float(np.linalg.norm(gap))


def balanced_selection(operators, x, atol=0.0):
    """Pick u_i ∈ A_i x (rows of the result) whose sum is as close to zero as possible."""
    x = _vec(x)
    bounds = [A.image_bounds(x, atol) for A in operators]
    if any(np.any(lo > hi) for lo, hi in bounds):
        raise OracleError("x is outside the domain of some operator")
    u = np.array([np.clip(0.0, lo, hi) for lo, hi in bounds])
    deficit = -u.sum(axis=0)
    for i, (lo, hi) in enumerate(bounds):
        new = np.clip(u[i] + deficit, lo, hi)
        deficit = deficit - (new - u[i])
        u[i] = new
    return u


def _product_space_dr(operators, m, gamma=1.0, max_iter=10**6, stop=1e-14):
    """Douglas-Rachford on the consensus reformulation of 0 ∈ Σ A_i x."""
    n = len(operators)
    z = np.zeros((n, m))
    for _ in range(max_iter):
        xbar = z.mean(axis=0)
        w = np.array([A.resolve(gamma, 2 * xbar - z[i]) for i, A in enumerate(operators)])
        step = w - xbar
        z = z + step
        if np.linalg.norm(step) <= stop * (1.0 + np.linalg.norm(z)):
            break
    return z.mean(axis=0)


def zero_of_sum_oracle(T, tol=1e-7, max_iter=10**6):
    """A certified x* with 0 ∈ Σ A_i x* up to ``tol``.

    Affine tuples are solved directly. Anything else goes through a long
    product-space Douglas-Rachford run, which shares no code with the
    splittings under test. Either way the result must pass the inclusion
    certificate, otherwise :class:`OracleError` is raised.
    """
    ops = T.operators
    affine = [A for A in ops if not isinstance(A, Zero)]
    if all(is_affine(A) for A in affine):
        K = sum((A.affine_parts()[0] for A in affine), np.zeros((T.m, T.m)))
        b = sum((A.affine_parts()[1] for A in affine), np.zeros(T.m))
        x, *_ = np.linalg.lstsq(K, -b, rcond=None)
    else:
        x = _product_space_dr(ops, T.m, max_iter=max_iter)
    residual = inclusion_residual(ops, x, atol=tol)
    if not residual <= tol:
        raise OracleError("no certified zero of the sum", residual)
    return x
