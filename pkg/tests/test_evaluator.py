import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_kernel
from frugal_split import zoo
from frugal_split.evaluator import (
    ResolventSolver,
    evaluate,
    fixed_point_residual,
    matrix_apply,
    pd_resolvent_solve,
    solution_from_point,
)
from frugal_split.operators import AffineMonotone, OperatorTuple, QuadraticGradient, Zero
from frugal_split.representation import InvalidRepresentationError, from_kernel, gamma_matrix
from frugal_split.runner import gen_lasso_problem, random_operator_tuple, run


def shift_tuple():
    """(x ↦ x − 1, 0) on the real line, forward on the first operator."""
    return OperatorTuple([QuadraticGradient(np.eye(1), [-1.0]), Zero()], {1}, 1)


def test_matrix_apply():
    z = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert_array_equal(matrix_apply(np.eye(3), z), z)
    a, b, c = z
    assert_allclose(matrix_apply(gamma_matrix(3, 3), z), [-c, -c, a + b])
    assert_array_equal(matrix_apply(np.zeros((2, 3)), z), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        matrix_apply(np.eye(2), z)


def test_solve_with_zero_operators():
    T = OperatorTuple([Zero()], (), 1)
    assert_allclose(pd_resolvent_solve([[1.0]], 1, T, [[2.5]]), [[2.5]])

    T = OperatorTuple([Zero(), Zero(), Zero()], {2}, 1)
    M = np.array([[1, 0, 1], [1, 0, 1], [1, 0, 1]], dtype=float)
    assert_allclose(pd_resolvent_solve(M, 3, T, np.ones((3, 1))), [[0], [0], [1]])


def test_solve_rejects_bad_kernel_and_mismatched_tuple():
    T = OperatorTuple([Zero(), Zero()], (), 1)
    with pytest.raises(InvalidRepresentationError):
        pd_resolvent_solve(np.ones((2, 2)) * -1, 2, T, np.ones((2, 1)))
    with pytest.raises(ValueError):
        pd_resolvent_solve(np.array([[0.0, 1.0], [0.0, 1.0]]), 2, T, np.ones((2, 1)))


def test_solve_satisfies_inclusion_for_affine_tuples():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        p = int(rng.integers(1, n + 1))
        F = {i for i in range(1, n + 1) if i != p and rng.random() < 0.3}
        ops = []
        for i in range(1, n + 1):
            G = rng.normal(size=(m, m))
            K = G @ G.T if i in F else G @ G.T + 0.5 * (G - G.T)
            ops.append((QuadraticGradient if i in F else AffineMonotone)(K, rng.normal(size=m)))
        T = OperatorTuple(ops, F, m)
        M = random_kernel(rng, n, p, F)
        x = rng.normal(size=(n, m))
        y = pd_resolvent_solve(M, p, T, x)
        r = x - (M + gamma_matrix(p, n)) @ y
        for i in range(1, n + 1):
            # The p-th component is A_p y_p; the others say y_i = A_i r_i.
            if i == p:
                assert_allclose(r[i - 1], T[i].forward(y[i - 1]), atol=1e-9)
            else:
                assert_allclose(y[i - 1], T[i].forward(r[i - 1]), atol=1e-9)


def test_stage_order_does_not_change_result():
    rng = np.random.default_rng(11)
    M = np.array([[1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 1], [-1, 0, -1, 1]], dtype=float)
    T = random_operator_tuple(4, 3, {2}, seed=1)
    solver = ResolventSolver(M, 4, {2})
    for _ in range(50):
        x = rng.normal(size=(4, 3))
        base = solver.solve(T, x)
        shuffled = solver.solve(T, x, rng=np.random.default_rng(int(rng.integers(1 << 30))))
        assert_array_equal(base, shuffled)


def test_forward_backward_step():
    rep = zoo.forward_backward(1.0).rep
    z_next, y = evaluate(rep, shift_tuple(), [[0.0]])
    assert_allclose(y[0], [-1.0])
    assert_allclose(z_next, [[1.0]])


def test_douglas_rachford_of_zero_operators_is_identity():
    rep = zoo.douglas_rachford(1.0).rep
    T = OperatorTuple([Zero(), Zero()], (), 2)
    z = np.array([[0.3, -4.0]])
    assert_allclose(evaluate(rep, T, z)[0], z)


def test_fixed_point_residual_proximal_point():
    rep = from_kernel([[1.0]], 1)
    T = OperatorTuple([QuadraticGradient(np.eye(1), [-1.0])], (), 1)
    assert fixed_point_residual(rep, T, [[0.0]]) == pytest.approx(0.5)
    assert fixed_point_residual(rep, T, [[1.0]]) == pytest.approx(0.0)


def test_solution_at_forward_backward_fixed_point():
    rep = zoo.forward_backward(1.0).rep
    x, res = solution_from_point(rep, shift_tuple(), [[1.0]])
    assert_allclose(x, [1.0])
    assert res <= 1e-12
    # With γ = 1 a single step is exact from anywhere, so use γ = 1/2.
    x, res = solution_from_point(zoo.forward_backward(0.5).rep, shift_tuple(), [[5.0]])
    assert_allclose(x, [3.0])
    assert res == pytest.approx(2.0)


def test_solution_after_davis_yin_run():
    problem = gen_lasso_problem(m=1)
    rep = zoo.davis_yin(1.0).rep
    trace = run(rep, problem.tuple, max_iter=10_000, tol=1e-12)
    x, res = solution_from_point(rep, problem.tuple, trace.z_final)
    assert_allclose(x, problem.known_solution, atol=1e-8)
    assert res <= 1e-7
    assert fixed_point_residual(rep, problem.tuple, trace.z_final) <= 1e-10
