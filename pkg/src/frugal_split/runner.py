"""Fixed-point iteration driver, Fejér monitoring and test problem generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import convergence
from .evaluator import Stepper, as_blocks
from .linalg import DEFAULT_TOL
from .operators import (
    AffineMonotone,
    BoxNormalCone,
    L1Subdifferential,
    OperatorTuple,
    QuadraticGradient,
    Scaled,
    SkewLinear,
    Zero,
    balanced_selection,
    inclusion_residual,
    zero_of_sum_oracle,
)
from .representation import InvalidRepresentationError, factorize, validate

TOLERANCE, MAX_ITER, DIVERGENCE = "tolerance", "max_iter", "divergence_guard"


@dataclass
class StepRecord:
    """One iteration: z_k, the dual point y_k it produced, and z_{k+1}."""

    k: int
    z: np.ndarray
    y: np.ndarray
    z_next: np.ndarray
    fixed_point_residual: float
    solution_residual: float
    lyapunov_Q: float = None
    correction_W: float = None


@dataclass
class IterationTrace:
    records: list
    terminated_by: str
    iterations: int
    z_final: np.ndarray
    P: np.ndarray = None
    stride: int = 1

    @property
    def final(self):
        return self.records[-1] if self.records else None

    @property
    def final_residual(self):
        return self.records[-1].fixed_point_residual if self.records else math.nan

    def summary(self):
        last = self.final
        return {
            "terminated_by": self.terminated_by,
            "iterations": self.iterations,
            "stored_steps": len(self.records),
            "stride": self.stride,
            "final_fixed_point_residual": None if last is None else last.fixed_point_residual,
            "final_solution_residual": None if last is None else last.solution_residual,
            "z_final": self.z_final.tolist(),
        }


def run(rep, T, z0=None, max_iter=10_000, tol=1e-10, guard=1e12, cap=10_000,
        Q=None, W=None, y_star=None, record_solution=True, numerics=DEFAULT_TOL):
    """Iterate z_{k+1} = z_k − U z_k + V y_k until one of three stopping rules fires.

    Stops when ‖z_k − z_{k+1}‖ ≤ ``tol`` (``"tolerance"``), after
    ``max_iter`` steps (``"max_iter"``), or when ‖z_{k+1}‖ exceeds ``guard``
    or stops being finite (``"divergence_guard"``).

    About ``cap`` records are kept. Past the cap every other record is
    dropped and the stride doubles; the last step is always kept. Each
    record carries both z_k and z_{k+1}, so Fejér checks still apply to
    every stored step.

    If Q and ``y_star`` are given, ``lyapunov_Q`` = ‖z_k − Py*‖²_Q is
    recorded; with W, ``correction_W`` = ‖z_k − Py_k‖²_W.
    """
    report = validate(rep, numerics)
    if not report.valid:
        raise InvalidRepresentationError("cannot iterate an invalid representation", report)
    P = factorize(rep, numerics).P
    step = Stepper(rep, numerics)
    z = np.zeros((rep.d, T.m)) if z0 is None else as_blocks(z0, T.m).copy()
    if z.shape != (rep.d, T.m):
        raise ValueError(f"z0 has shape {z.shape}, expected {(rep.d, T.m)}")
    Py_star = None if y_star is None else P @ as_blocks(y_star, T.m)

    records, stride, k, last = [], 1, 0, None
    terminated_by = MAX_ITER
    while k < max_iter:
        z_next, y = step(T, z)
        fp = float(np.linalg.norm(z - z_next))
        sol = inclusion_residual(T.operators, y[rep.p - 1], numerics.residual_tol) if record_solution else math.nan
        record = StepRecord(k, z, y, z_next, fp, sol)
        if Q is not None and Py_star is not None:
            record.lyapunov_Q = convergence.q_norm_sq(Q, z - Py_star)
        if W is not None:
            record.correction_W = convergence.q_norm_sq(W, z - P @ y)
        done = fp <= tol
        diverged = not np.all(np.isfinite(z_next)) or np.linalg.norm(z_next) > guard
        if k % stride == 0:
            records.append(record)
            if len(records) > cap:
                records = records[::2]
                stride *= 2
        last = record
        z = z_next
        k += 1
        if done:
            terminated_by = TOLERANCE
            break
        if diverged:
            terminated_by = DIVERGENCE
            break
    if k and records[-1] is not last:
        records.append(last)
    return IterationTrace(records, terminated_by, k, z, P, stride)


@dataclass
class FejerReport:
    holds_all: bool
    first_violation: int = None
    max_violation: float = 0.0
    checked: int = 0

    def to_dict(self):
        return {
            "holds_all": self.holds_all,
            "first_violation": self.first_violation,
            "max_violation": self.max_violation,
            "checked": self.checked,
        }


def monitor_fejer(trace, Q, W, Py_star, slack=1e-9):
    """Check ‖z_{k+1} − Py*‖²_Q ≤ ‖z_k − Py*‖²_Q − ‖z_k − Py_k‖²_W + slack on every stored step.

    ``max_violation`` is the largest lhs − rhs (negative when every step
    holds with room to spare).
    """
    Py_star = np.asarray(Py_star, dtype=float)
    first, worst = None, -math.inf
    for rec in trace.records:
        lhs = convergence.q_norm_sq(Q, rec.z_next - Py_star)
        rhs = convergence.q_norm_sq(Q, rec.z - Py_star) - convergence.q_norm_sq(W, rec.z - trace.P @ rec.y)
        gap = lhs - rhs
        worst = max(worst, gap)
        if gap > slack and first is None:
            first = rec.k
    if not trace.records:
        worst = 0.0
    return FejerReport(first is None, first, float(worst), len(trace.records))


# -- problems ------------------------------------------------------------------


@dataclass
class Problem:
    """An operator tuple with a certified solution x* of 0 ∈ Σ A_i x."""

    tuple: OperatorTuple
    known_solution: np.ndarray = None
    seed: int = None
    certificate_residual: float = None
    name: str = "problem"

    @property
    def n(self):
        return self.tuple.n

    @property
    def F(self):
        return self.tuple.F

    @property
    def betas(self):
        return dict(self.tuple.betas)

    def dual_solution(self, p, atol=1e-7):
        """A zero y* of the primal-dual operator for primal index p.

        y_p = x* and y_i = u_i for i ≠ p, where u_i ∈ A_i x* are chosen to
        sum to zero.
        """
        if self.known_solution is None:
            raise ValueError("the problem has no known solution")
        u = balanced_selection(self.tuple.operators, self.known_solution, atol)
        y = u.copy()
        y[p - 1] = self.known_solution
        return y

    def to_dict(self):
        out = self.tuple.to_dict()
        out["seed"] = self.seed
        if self.known_solution is not None:
            out["known_solution"] = self.known_solution.tolist()
        return out


def _random_psd(rng, m):
    B = rng.normal(size=(m, m))
    return B @ B.T / m


def gen_affine_problem(n, m, F=(), mu=0.1, seed=0, max_retries=50):
    """Random affine monotone operators with a unique zero of the sum.

    Indices in F get gradients of convex quadratics, so they are cocoercive
    and their β is computed exactly. The others are a positive
    semidefinite part plus a skew part. Each K_i gets μ/n·I added.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    F = frozenset(int(i) for i in F)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        ops = []
        for i in range(1, n + 1):
            shift = mu / n * np.eye(m)
            if i in F:
                ops.append(QuadraticGradient(_random_psd(rng, m) + shift, rng.normal(size=m)))
            else:
                G = rng.normal(size=(m, m))
                K = _random_psd(rng, m) + 0.5 * (G - G.T) + shift
                ops.append(AffineMonotone(K, rng.normal(size=m)))
        K = sum(A.affine_parts()[0] for A in ops)
        if np.linalg.cond(K) > 1e8:
            continue
        T = OperatorTuple(ops, F, m)
        x = np.linalg.solve(K, -sum(A.affine_parts()[1] for A in ops))
        residual = inclusion_residual(ops, x)
        return Problem(T, x, seed, residual, f"affine(n={n}, m={m}, seed={seed})")
    raise RuntimeError(f"no well-conditioned affine problem after {max_retries} attempts")


def random_operator(rng, m, forward=False):
    """A random maximally monotone operator on R^m.

    Forward operators are quadratic gradients (cocoercive). The others are
    drawn from affine, skew, box, ℓ1 and scaled variants so that resolvents,
    inverse resolvents and set-valued images all get exercised.
    """
    if forward:
        return QuadraticGradient(_random_psd(rng, m), rng.normal(size=m))
    kind = rng.integers(5)
    if kind == 0:
        G = rng.normal(size=(m, m))
        return AffineMonotone(_random_psd(rng, m) + 0.5 * (G - G.T), rng.normal(size=m))
    if kind == 1:
        G = rng.normal(size=(m, m))
        return SkewLinear(G - G.T)
    if kind == 2:
        lo = -rng.random(m) - 0.1
        return BoxNormalCone(lo, lo + 2 * rng.random(m) + 0.2)
    if kind == 3:
        return L1Subdifferential(0.1 + rng.random())
    return Scaled(0.5 + rng.random(), L1Subdifferential(0.1 + rng.random()))


def random_operator_tuple(n, m, F=(), seed=None):
    """n random operators on R^m with forward set F; see :func:`random_operator`."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    F = frozenset(int(i) for i in F)
    return OperatorTuple([random_operator(rng, m, i in F) for i in range(1, n + 1)], F, m)


def gen_lasso_problem(m=1, mu_l1=1.0, box=(-10.0, 10.0), seed=0, oracle_tol=1e-7):
    """(N_box, ∇(½xᵀPx + qᵀx), μ∂‖·‖₁), with the middle operator forward.

    For m = 1 the quadratic is ½(x − 2)², so with μ = 1 the solution is x* = 1.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = np.random.default_rng(seed)
    if m == 1:
        P, q = np.eye(1), np.array([-2.0])
    else:
        P = _random_psd(rng, m) + 0.1 * np.eye(m)
        q = rng.normal(size=m) * 3
    lo, hi = box
    l1 = L1Subdifferential(mu_l1) if mu_l1 > 0 else Zero()
    ops = [BoxNormalCone(np.full(m, lo), np.full(m, hi)), QuadraticGradient(P, q), l1]
    T = OperatorTuple(ops, {2}, m)
    x = zero_of_sum_oracle(T, tol=oracle_tol)
    residual = inclusion_residual(ops, x, atol=oracle_tol)
    return Problem(T, x, seed, residual, f"lasso(m={m}, mu={mu_l1}, seed={seed})")


# -- comparison ----------------------------------------------------------------


class IncompatibleMethodError(ValueError):
    pass


@dataclass
class CompareRow:
    name: str
    iterations_to_tol: int
    final_residual: float
    certified: bool
    terminated_by: str
    solution_error: float = None
    parameters: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "iterations_to_tol": self.iterations_to_tol,
            "final_residual": self.final_residual,
            "certified": self.certified,
            "terminated_by": self.terminated_by,
            "solution_error": self.solution_error,
        }


def compare(entries, problem, budget=10_000, tol=1e-10):
    """Run each entry on the same problem from z0 = 0 with the same budget."""
    for e in entries:
        if e.n != problem.n or e.F != problem.F:
            raise IncompatibleMethodError(
                f"{e.name} expects n={e.n}, F={sorted(e.F)}; problem has n={problem.n}, F={sorted(problem.F)}"
            )
    rows = []
    for e in entries:
        trace = run(e.rep, problem.tuple, max_iter=budget, tol=tol, record_solution=False, cap=100)
        try:
            certified = e.certificate(problem.betas).satisfied
        except (KeyError, ValueError):
            certified = False
        error = None
        if problem.known_solution is not None and trace.final is not None:
            x = trace.final.y[e.rep.p - 1]
            error = float(np.linalg.norm(x - problem.known_solution))
        rows.append(CompareRow(
            e.name,
            trace.iterations if trace.terminated_by == TOLERANCE else None,
            trace.final_residual,
            bool(certified),
            trace.terminated_by,
            error,
            dict(e.parameters),
        ))
    return rows


# -- output --------------------------------------------------------------------


def _fmt(x):
    """Shortest round-trip decimal, empty for missing values."""
    if x is None:
        return ""
    return repr(float(x))


TRACE_COLUMNS = ["k", "residual_fp", "residual_sol", "lyapunov_Q", "correction_W"]


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.k, _fmt(r.fixed_point_residual), _fmt(r.solution_residual),
                        _fmt(r.lyapunov_Q), _fmt(r.correction_W)])


def write_compare_csv(rows, path):
    cols = ["name", "iterations_to_tol", "final_residual", "certified", "terminated_by", "solution_error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            d = row.to_dict()
            w.writerow([
                d["name"],
                "" if d["iterations_to_tol"] is None else d["iterations_to_tol"],
                _fmt(d["final_residual"]),
                str(d["certified"]).lower(),
                d["terminated_by"],
                _fmt(d["solution_error"]),
            ])
