import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from frugal_split.operators import (
    AffineMonotone,
    BoxNormalCone,
    CallbackOperator,
    L1Subdifferential,
    NotSingleValuedError,
    OperatorTuple,
    OracleError,
    QuadraticGradient,
    Scaled,
    SkewLinear,
    Zero,
    apply_hat,
    balanced_selection,
    inclusion_residual,
    operator_from_dict,
    tuple_from_dict,
    zero_of_sum_oracle,
)


def test_soft_threshold_example():
    assert_allclose(L1Subdifferential(1.0).resolve(1.0, [3.0, -0.5, -2.0]), [2.0, 0.0, -1.0])


def test_box_projection_and_inverse_resolvent():
    box = BoxNormalCone([-1.0], [1.0])
    assert_allclose(box.resolve(0.3, [2.5]), [1.0])
    # J_{γ N^{-1}}(x) = x − γ P_box(x/γ)
    assert_allclose(box.resolve_inverse(2.0, [5.0]), [5.0 - 2.0 * 1.0])
    assert_allclose(box.resolve_inverse(2.0, [1.0]), [0.0])


def test_affine_resolvent_solves_linear_system():
    K = np.array([[2.0, 1.0], [-1.0, 1.0]])
    b = np.array([1.0, -1.0])
    A = AffineMonotone(K, b)
    x = np.array([0.3, 0.7])
    y = A.resolve(0.5, x)
    assert_allclose(y + 0.5 * (K @ y + b), x)


def test_affine_rejects_nonmonotone():
    with pytest.raises(ValueError):
        AffineMonotone(np.diag([1.0, -1.0]))


def test_quadratic_and_skew_validation():
    with pytest.raises(ValueError):
        QuadraticGradient(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        SkewLinear(np.eye(2))


def test_cocoercivity_bounds():
    assert QuadraticGradient(np.diag([4.0, 1.0])).cocoercivity_bound() == pytest.approx(0.25)
    assert QuadraticGradient(np.zeros((2, 2))).cocoercivity_bound() == math.inf
    assert SkewLinear(np.array([[0.0, 1.0], [-1.0, 0.0]])).cocoercivity_bound() is None
    assert Zero().cocoercivity_bound() == math.inf
    # Cocoercivity of a non-symmetric K is measured on ran Kᵀ.
    K = np.array([[1.0, 1.0], [-1.0, 1.0]])
    beta = AffineMonotone(K).cocoercivity_bound()
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.normal(size=2)
        assert x @ K @ x >= beta * np.sum((K @ x) ** 2) - 1e-12
    assert beta == pytest.approx(0.5)


def test_scaled_operator():
    A = Scaled(2.0, L1Subdifferential(1.0))
    assert_allclose(A.resolve(1.0, [3.0]), [1.0])
    assert_allclose(A.resolve_inverse(1.0, [3.0]), [2.0])
    assert Scaled(2.0, QuadraticGradient(np.eye(1))).cocoercivity_bound() == pytest.approx(0.5)


def test_callback_operator_uses_moreau_for_inverse():
    A = CallbackOperator(forward=lambda x: 2 * x, resolvent=lambda g, x: x / (1 + 2 * g), beta=0.5)
    x = np.array([1.0, -3.0])
    # A = 2 Id, so A^{-1} = Id/2 and J_{γA^{-1}} x = x / (1 + γ/2).
    assert_allclose(A.resolve_inverse(0.7, x), x / 1.35, atol=1e-12)


def test_apply_hat_cases():
    A = QuadraticGradient(np.eye(1) * 2.0)
    assert_allclose(apply_hat(A, True, 2.0, [4.0]), [1.0])
    assert_allclose(apply_hat(A, False, 0.0, [3.0]), [6.0])
    # (l + A^{-1})^{-1} x with A = 2 Id: y solves x = l y + y/2.
    assert_allclose(apply_hat(A, False, 1.5, [4.0]), [2.0])
    with pytest.raises(NotSingleValuedError):
        apply_hat(L1Subdifferential(1.0), False, 0.0, [1.0])
    with pytest.raises(ValueError):
        apply_hat(A, True, 0.0, [1.0])


def test_operator_tuple_fills_betas_and_warns_on_conflict():
    Q = QuadraticGradient(np.diag([2.0, 1.0]))
    T = OperatorTuple([Q, Zero()], {1}, 2)
    assert T.betas == {1: pytest.approx(0.5)}
    assert T[1] is Q
    with pytest.warns(UserWarning):
        T2 = OperatorTuple([Q, Zero()], {1}, 2, {1: 3.0})
    assert T2.beta_conflicts == {1: pytest.approx(0.5)}
    with pytest.raises(NotSingleValuedError):
        OperatorTuple([L1Subdifferential(1.0), Zero()], {1}, 2)
    with pytest.raises(ValueError):
        OperatorTuple([Zero(), Zero()], {1, 2}, 2)


def test_operator_tuple_scaled():
    T = OperatorTuple([QuadraticGradient(np.eye(2)), L1Subdifferential(1.0)], {1}, 2)
    S = T.scaled(4.0)
    assert S.betas[1] == pytest.approx(0.25)
    assert_allclose(S[1].forward([1.0, 2.0]), [4.0, 8.0])


def test_json_round_trip():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        T = OperatorTuple(
            [BoxNormalCone([-1.0, -2.0], [1.0, 2.0]), QuadraticGradient(np.eye(2), [1.0, 0.0]),
             L1Subdifferential(0.5), Scaled(2.0, SkewLinear(np.array([[0.0, 1.0], [-1.0, 0.0]])))],
            {2}, 2,
        )
        T2 = tuple_from_dict(T.to_dict())
    assert T2.to_dict() == T.to_dict()
    assert isinstance(operator_from_dict({"kind": "zero"}), Zero)
    with pytest.raises(ValueError):
        operator_from_dict({"kind": "nope"})


def test_inclusion_residual_with_set_valued_images():
    ops = [BoxNormalCone([-10.0], [10.0]), QuadraticGradient(np.eye(1), [-2.0]), L1Subdifferential(1.0)]
    assert inclusion_residual(ops, [1.0]) == pytest.approx(0.0)
    assert inclusion_residual(ops, [0.0]) == pytest.approx(1.0)
    assert inclusion_residual(ops, [11.0]) == math.inf
    u = balanced_selection(ops, np.array([1.0]))
    assert_allclose(u.sum(axis=0), 0.0, atol=1e-14)


def test_oracle_on_lasso_scalar():
    ops = [BoxNormalCone([-10.0], [10.0]), QuadraticGradient(np.eye(1), [-2.0]), L1Subdifferential(1.0)]
    x = zero_of_sum_oracle(OperatorTuple(ops, {2}, 1))
    assert_allclose(x, [1.0], atol=1e-8)


def test_oracle_on_affine_pair():
    T = OperatorTuple([AffineMonotone(np.eye(2), [1.0, 0.0]), AffineMonotone(np.eye(2), [1.0, 2.0])], (), 2)
    assert_allclose(zero_of_sum_oracle(T), [-1.0, -1.0], atol=1e-12)


def test_oracle_refuses_empty_zero_set():
    T = OperatorTuple([Zero(), AffineMonotone(np.zeros((1, 1)), [1.0])], (), 1)
    with pytest.raises(OracleError):
        zero_of_sum_oracle(T)
