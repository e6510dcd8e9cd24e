"""Known splittings written as generalized primal-dual resolvents.

Each constructor returns a :class:`ZooEntry` holding the representation, a
closed-form metric Q for the convergence certificate, the method's own
convergence inequality and an independent "textbook" implementation of one
iteration. The textbook update composes resolvents and forward steps
directly, without going through (M, N, U, V), so comparing the two is a
meaningful check of the representation.

Operators are accessed 1-based, ``T[i]``, and lifted points are arrays of
shape ``(d, m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import convergence
from .linalg import DEFAULT_TOL
from .representation import (
    Representation,
    compose,
    factorize,
    from_kernel_with,
    minimal_lifting,
    rescaled,
)


@dataclass(frozen=True)
class ZooEntry:
    """A named splitting with its representation and convergence data.

    ``Q`` maps a betas dictionary to the certificate metric; ``condition``
    maps it to the method's own convergence inequality. Both ignore betas
    when the forward set is empty.
    """

    name: str
    parameters: dict
    representation: Representation
    Q: Callable
    condition: Callable
    textbook: Callable
    citation: str
    forward_set: frozenset = field(default=frozenset())

    @property
    def rep(self):
        return self.representation

    @property
    def n(self):
        return self.representation.n

    @property
    def d(self):
        return self.representation.d

    @property
    def F(self):
        return self.representation.F

    def factored(self, tol=DEFAULT_TOL):
        return factorize(self.representation, tol)

    def closed_form_Q(self, betas=None):
        return np.asarray(self.Q(_betas(betas)), dtype=float)

    def convergence_condition(self, betas=None):
        return bool(self.condition(_betas(betas)))

    def textbook_step(self, T, z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(self.d, -1)
        return self.textbook(T, z)

    def is_minimal(self):
        return self.d == minimal_lifting(self.n, self.F)

    def certificate(self, betas=None, tol=DEFAULT_TOL):
        return convergence.check(self.factored(tol), self.closed_form_Q(betas), betas, tol)


def _betas(betas):
    if betas is None:
        return {}
    if hasattr(betas, "betas"):
        return dict(betas.betas)
    return {int(k): float(v) for k, v in dict(betas).items()}


def _inv_beta(betas, i):
    if i not in betas:
        raise KeyError(f"the condition needs beta_{i}")
    beta = betas[i]
    return 0.0 if math.isinf(beta) else 1.0 / beta


def _positive(**values):
    for name, value in values.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive, got {value}")


def _size(n, least=2):
    if int(n) != n or n < least:
        raise ValueError(f"n must be an integer >= {least}, got {n}")
    return int(n)


def _always(betas):
    return True


# -- two-operator splittings -------------------------------------------------


def forward_backward(gamma):
    """z⁺ = J_{γA₂}(z − γA₁z) with A₁ the forward operator."""
    _positive(gamma=gamma)
    g = float(gamma)
    rep = Representation(2, [[0, 1], [0, 1 / g]], [[1], [1 / g]], [[1]], [[0, 1]], {1})

    def textbook(T, z):
        return T[2].resolve(g, z[0] - g * T[1].forward(z[0]))[None, :]

    return ZooEntry(
        "forward-backward", {"gamma": g}, rep,
        lambda betas: np.array([[1 / g]]),
        lambda betas: g * _inv_beta(betas, 1) < 2,
        textbook, "forward-backward splitting",
    )


def douglas_rachford(gamma):
    _positive(gamma=gamma)
    g = float(gamma)
    rep = Representation(2, [[g, 1], [1, 1 / g]], [[1], [1 / g]], [[1]], [[g, 1]])

    def textbook(T, z):
        x1 = T[1].resolve(g, z[0])
        x2 = T[2].resolve(g, 2 * x1 - z[0])
        return (z[0] + x2 - x1)[None, :]

    return ZooEntry(
        "douglas-rachford", {"gamma": g}, rep,
        lambda betas: np.array([[1 / g]]), _always, textbook,
        "Douglas-Rachford splitting",
    )


def davis_yin(gamma):
    """Three-operator splitting with the middle operator evaluated forward."""
    _positive(gamma=gamma)
    g = float(gamma)
    rep = Representation(
        3, [[g, 0, 1], [g, 0, 1], [1, 0, 1 / g]], [[1], [1], [1 / g]], [[1]], [[g, 0, 1]], {2}
    )

    def textbook(T, z):
        x1 = T[1].resolve(g, z[0])
        x3 = T[3].resolve(g, 2 * x1 - z[0] - g * T[2].forward(x1))
        return (z[0] - x1 + x3)[None, :]

    return ZooEntry(
        "davis-yin", {"gamma": g}, rep,
        lambda betas: np.array([[1 / g]]),
        lambda betas: g * _inv_beta(betas, 2) < 2,
        textbook, "Davis-Yin three-operator splitting",
    )


def chambolle_pock(tau, sigma):
    _positive(tau=tau, sigma=sigma)
    t, s = float(tau), float(sigma)
    M = np.array([[1 / t, -1], [-1, 1 / s]])
    rep = Representation(1, M, M, np.eye(2), np.eye(2))

    def textbook(T, z):
        x = T[1].resolve(t, z[0] - t * z[1])
        y = T[2].resolve_inverse(s, z[1] + s * (2 * x - z[0]))
        return np.vstack([x, y])

    return ZooEntry(
        "chambolle-pock", {"tau": t, "sigma": s}, rep,
        lambda betas: M.copy(),
        lambda betas: s * t < 1,
        textbook, "Chambolle-Pock primal-dual method",
    )


_MOMENTUM_U = np.array([[1.0, 0.0], [1.0, 1.0]])
_MOMENTUM_P = np.array([[0.0, 1.0], [0.0, 0.0]])


def _momentum_textbook(g, theta, extrapolate_forward):
    def textbook(T, z):
        if extrapolate_forward:
            w = z[0] + theta * z[1]
            x = T[2].resolve(g, w - g * T[1].forward(w))
        else:
            x = T[2].resolve(g, z[0] - g * T[1].forward(z[0]) + theta * z[1])
        return np.vstack([x, x - z[0]])

    return textbook


def fb_momentum_forward(gamma, theta):
    """Forward-backward with heavy-ball momentum added after the forward step.

    The metric is Q = γ⁻¹[[1−θ, θ], [θ, |θ|+ε]] with ε > 0 free. We take the
    ε that maximizes min(λ_min(Q), λ_min(W)) over a log grid augmented by
    the balancing value ε = c/2 − |θ|, c = 1 − θ − γ/(2β₁).
    """
    _positive(gamma=gamma)
    g, th = float(gamma), float(theta)
    S = np.array([[1.0, 0.0], [(1 - th) / g, th / g]])
    rep = compose(2, S, _MOMENTUM_U, _MOMENTUM_P, {1})
    fact = factorize(rep)

    def metric(eps):
        return np.array([[1 - th, th], [th, abs(th) + eps]]) / g

    def Q(betas):
        g_hat = g * _inv_beta(betas, 1) / 2
        candidates = list(np.logspace(-8, 2, 41))
        balanced = (1 - th - g_hat) / 2 - abs(th)
        if balanced > 0:
            candidates.append(balanced)
        scores = []
        for eps in candidates:
            cert = convergence.check(fact, metric(eps), betas)
            scores.append(min(cert.min_eig_Q, cert.min_eig_W))
        return metric(candidates[int(np.argmax(scores))])

    return ZooEntry(
        "fb-momentum-forward", {"gamma": g, "theta": th}, rep, Q,
        lambda betas: 1 - th - 2 * abs(th) - g * _inv_beta(betas, 1) / 2 > 0,
        _momentum_textbook(g, th, extrapolate_forward=False),
        "forward-backward with momentum on the forward step",
    )


def _nesterov_a(theta, g_hat):
    if theta > 0:
        return theta**2 * g_hat + theta * (1 - g_hat)
    # For θ ≤ 0 the same optimization over a gives |θ||1−γ̂| in place of
    # θ(1−γ̂); at θ = 0 any a in (0, 1 − γ̂) works and we take the midpoint.
    slack = abs(theta) * abs(1 - g_hat)
    if slack == 0:
        slack = max((1 - g_hat) / 2, 1e-3)
    return theta**2 * g_hat + slack


def fb_nesterov(gamma, theta):
    """Forward-backward where both steps use the extrapolated point z₁ + θz₂.

    The inequality is 1 − 3θ − γ̂(1−θ)² > 0 for θ > 0 with γ̂ = γ/(2β₁).
    For θ ≤ 0 we use the exact optimum over the free metric entry,
    1 − θ − γ̂ − θ²γ̂ − 2|θ||1−γ̂| > 0, which agrees at θ = 0.
    """
    _positive(gamma=gamma)
    g, th = float(gamma), float(theta)
    S = np.array([[1 - th, th], [(1 - th) / g, th / g]])
    rep = compose(2, S, _MOMENTUM_U, _MOMENTUM_P, {1})

    def Q(betas):
        g_hat = g * _inv_beta(betas, 1) / 2
        return np.array([[1 - th, th], [th, _nesterov_a(th, g_hat)]]) / g

    def condition(betas):
        g_hat = g * _inv_beta(betas, 1) / 2
        if th > 0:
            return 1 - 3 * th - g_hat * (th - 1) ** 2 > 0
        return 1 - th - g_hat - th**2 * g_hat - 2 * abs(th) * abs(1 - g_hat) > 0

    return ZooEntry(
        "fb-nesterov", {"gamma": g, "theta": th}, rep, Q, condition,
        _momentum_textbook(g, th, extrapolate_forward=True),
        "forward-backward with Nesterov-like momentum",
    )


# -- minimal-lifting resolvent splittings ------------------------------------


def ryu_three(theta):
    _positive(theta=theta)
    th = float(theta)
    M = [[1, 0, 1], [1, 1, 1], [1, 0, 1]]
    N = [[1, 0], [1, 1], [1, 0]]
    U = th * np.array([[1.0, 0.0], [1.0, 1.0]])
    V = th * np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
    rep = Representation(3, M, N, U, V)

    def textbook(T, z):
        x1 = T[1].resolve(1.0, z[0])
        x2 = T[2].resolve(1.0, z[1] + x1)
        x3 = T[3].resolve(1.0, -z[0] - z[1] + x1 + x2)
        return np.vstack([z[0] + th * (x3 - x1), z[1] + th * (x3 - x2)])

    return ZooEntry(
        "ryu-three", {"theta": th}, rep,
        lambda betas: np.eye(2) / th,
        lambda betas: 0 < th < 1,
        textbook, "Ryu's three-operator minimal lifting splitting",
    )


def malitsky_tam(n, theta):
    n = _size(n)
    _positive(theta=theta)
    th = float(theta)
    d = n - 1
    M = np.zeros((n, n))
    for i in range(d):
        M[i, : i + 1] = 1.0
    M[:, n - 1] = 1.0
    M[n - 1, 0] = 1.0
    N = np.zeros((n, d))
    N[:d, :d] = np.eye(d)
    N[n - 1, 0] = 1.0
    U = th * (np.eye(d) - np.eye(d, k=1))
    V = np.zeros((d, n))
    for i in range(d - 1):
        V[i, i + 1] = -th
    V[d - 1, :] = th
    rep = Representation(n, M, N, U, V)

    def textbook(T, z):
        x = [T[1].resolve(1.0, z[0])]
        for i in range(2, n):
            x.append(T[i].resolve(1.0, z[i - 1] - z[i - 2] + x[-1]))
        x.append(T[n].resolve(1.0, -z[d - 1] + x[0] + x[-1]))
        return np.vstack([z[i] + th * (x[i + 1] - x[i]) for i in range(d)])

    return ZooEntry(
        "malitsky-tam", {"n": n, "theta": th}, rep,
        lambda betas: np.eye(d) / th,
        lambda betas: 0 < th < 1,
        textbook, "Malitsky-Tam minimal lifting splitting",
    )


def campoy(n, gamma, theta):
    """Douglas-Rachford on the product-space reformulation of the sum.

    The metric is Q = (γθ)⁻¹I: P = U⁻¹V does not depend on θ while
    S = NU⁻¹ scales with θ⁻¹, and PᵀQ = S then pins Q down.
    """
    n = _size(n)
    _positive(gamma=gamma, theta=theta)
    g, th = float(gamma), float(theta)
    d, k = n - 1, float(n - 1)
    M = np.zeros((n, n))
    M[0, 0] = g / k
    M[1:d, 0] = 2 * g / k
    M[range(1, d), range(1, d)] = g
    M[:d, n - 1] = 1.0
    M[n - 1, 0] = (3 - n) / k
    M[n - 1, 1:d] = -1.0
    M[n - 1, n - 1] = 1 / g
    N = np.full((n, d), 2.0)
    N[0, :] = 1.0
    for i in range(1, d):
        N[i, i - 1] = 3 - n
    N[n - 1, :] = 2 / g
    N[n - 1, d - 1] = (3 - n) / g
    N /= k
    U = np.full((d, d), -1.0)
    np.fill_diagonal(U, n - 2)
    U[d - 1, :] = 1.0
    U *= th / k
    V = np.zeros((d, n))
    V[:, 0] = -1.0
    V[range(d - 1), range(1, d)] = 1 - n
    V[d - 1, 0] = 1.0
    V[d - 1, n - 1] = k / g
    V *= th * g / k
    rep = Representation(n, M, N, U, V)

    def textbook(T, z):
        x1 = T[1].resolve(g / k, z.mean(axis=0))
        x = [T[i].resolve(g, 2 * x1 - z[i - 2]) for i in range(2, n + 1)]
        return np.vstack([z[i] + th * (x[i] - x1) for i in range(d)])

    return ZooEntry(
        "campoy", {"n": n, "gamma": g, "theta": th}, rep,
        lambda betas: np.eye(d) / (g * th),
        lambda betas: 0 < th < 2,
        textbook, "product-space Douglas-Rachford (Campoy; Condat et al.)",
    )


def projective(tau, theta):
    """Synchronous projective splitting with a fixed relaxation θ.

    For τ₁ = … = τ_{n−1} = t and τₙ = 1/t the certificate W ≻ 0 reduces to
    θ(t² + n − 1) < 2t. Other step-size patterns are checked numerically.
    """
    tau = np.asarray(tau, dtype=float).ravel()
    n = _size(tau.size)
    if not np.all(np.isfinite(tau)) or np.any(tau <= 0):
        raise ValueError("all step sizes tau must be positive")
    _positive(theta=theta)
    th = float(theta)
    M = np.zeros((n, n))
    M[range(n - 1), range(n - 1)] = tau[:-1]
    M[: n - 1, n - 1] = 1.0
    M[n - 1, : n - 1] = -1.0
    M[n - 1, n - 1] = 1 / tau[-1]
    rep = Representation(n, M, M, th * M, th * M)
    t = 1 / tau[-1]
    uniform = np.allclose(tau[:-1], t, rtol=1e-12, atol=0)

    def condition(betas):
        if uniform:
            return th * (t * t + n - 1) < 2 * t
        W = M + M.T - th * M.T @ M
        return np.linalg.eigvalsh(W)[0] > DEFAULT_TOL.eig_tol

    def textbook(T, z):
        zn, zs = z[n - 1], z[: n - 1]
        y = [T[i].resolve_inverse(1 / tau[i - 1], zs[i - 1] + zn / tau[i - 1]) for i in range(1, n)]
        yn = T[n].resolve(tau[-1], zn - tau[-1] * zs.sum(axis=0))
        rows = [zs[i] - th * (tau[i] * zs[i] + zn) + th * (tau[i] * y[i] + yn) for i in range(n - 1)]
        rows.append(zn - th * (zn / tau[-1] - zs.sum(axis=0)) + th * (yn / tau[-1] - sum(y)))
        return np.vstack(rows)

    return ZooEntry(
        "projective", {"tau": tau.tolist(), "theta": th}, rep,
        lambda betas: np.eye(n) / th, condition, textbook,
        "synchronous projective splitting",
    )


def new_minimal(n, f, lam, theta):
    """Minimal-lifting splitting with f forward evaluations just before the last operator.

    The resolvents of A₂, …, A_{n−1−f} are independent of each other and
    can be evaluated in parallel. Forward operators are F = {n−f, …, n−1}.
    The step size λ scales every operator; the representation is built at
    λ = 1 and then rescaled.
    """
    n = _size(n)
    if int(f) != f or not 0 <= f <= n - 2:
        raise ValueError(f"f must be an integer in 0..{n - 2}")
    f = int(f)
    _positive(lam=lam, theta=theta)
    lam, th = float(lam), float(theta)
    r = n - 2 - f
    d = r + 1
    F = frozenset(range(n - f, n))
    M = np.zeros((n, n))
    M[:, 0] = 1.0
    M[:, n - 1] = 1.0
    M[range(1, r + 1), range(1, r + 1)] = 1 / th
    K = np.zeros((n, d))
    K[0, 0] = K[n - 1, 0] = 0.5
    K[range(1, r + 1), range(1, r + 1)] = 1.0
    H = np.zeros((d, n))
    H[0, [0, *range(n - f - 1, n)]] = th / (2 + f)
    H[range(1, r + 1), range(1, r + 1)] = th
    rep = rescaled(from_kernel_with(M, K, H, n, F), lam)
    resolvents = range(2, n - f)

    def textbook(T, z):
        x1 = T[1].resolve(lam, z[0])
        x = {i: T[i].resolve(lam / th, x1 + z[i - 1] / th) for i in resolvents}
        x_bar = sum((lam * T[i].forward(x1) for i in sorted(F)), np.zeros_like(x1))
        for i in resolvents:
            x_bar = x_bar + z[i - 1] + th * (x1 - x[i])
        xn = T[n].resolve(lam, 2 * x1 - z[0] - x_bar)
        rows = [z[0] - th * (x1 - xn)]
        rows += [z[i - 1] - th * (x[i] - xn) for i in resolvents]
        return np.vstack(rows)

    def condition(betas):
        return lam / 2 * sum(_inv_beta(betas, i) for i in F) < 2 - th * (n - 1 - f)

    return ZooEntry(
        "new-minimal", {"n": n, "f": f, "lam": lam, "theta": th}, rep,
        lambda betas: np.eye(d) / (lam * th), condition, textbook,
        "minimal-lifting splitting with parallel resolvents", F,
    )


# -- lookup by name ----------------------------------------------------------


CONSTRUCTORS = {
    "forward-backward": (forward_backward, ("gamma",)),
    "douglas-rachford": (douglas_rachford, ("gamma",)),
    "davis-yin": (davis_yin, ("gamma",)),
    "chambolle-pock": (chambolle_pock, ("tau", "sigma")),
    "fb-momentum-forward": (fb_momentum_forward, ("gamma", "theta")),
    "fb-nesterov": (fb_nesterov, ("gamma", "theta")),
    "ryu-three": (ryu_three, ("theta",)),
    "malitsky-tam": (malitsky_tam, ("n", "theta")),
    "campoy": (campoy, ("n", "gamma", "theta")),
    "projective": (projective, ("tau", "theta")),
    "new-minimal": (new_minimal, ("n", "f", "lam", "theta")),
}


def build(name, **params):
    """Construct a zoo entry by name; missing or extra parameters raise ``TypeError``."""
    key = name.replace("_", "-").lower()
    if key not in CONSTRUCTORS:
        raise KeyError(f"unknown method {name!r}; choose from {sorted(CONSTRUCTORS)}")
    ctor, names = CONSTRUCTORS[key]
    missing = [p for p in names if params.get(p) is None]
    if missing:
        raise TypeError(f"{key} needs parameters {missing}")
    return ctor(**{p: params[p] for p in names})
