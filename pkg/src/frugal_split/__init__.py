"""Frugal splitting operators as generalized primal-dual resolvents.

A splitting over n monotone operators is described by a primal index p and
matrices (M, N, U, V). One step computes y = (M + Φ_{A,p})^{-1} N z and
returns z − Uz + Vy.
"""

from .convergence import ConvergenceCertificate, RankDeficientUError, build_W, check, search_Q
from .evaluator import evaluate, fixed_point_residual, pd_resolvent_solve, solution_from_point
from .linalg import DEFAULT_TOL, Tolerance
from .operators import (
    AffineMonotone,
    BoxNormalCone,
    CallbackOperator,
    L1Subdifferential,
    OperatorTuple,
    QuadraticGradient,
    Scaled,
    SkewLinear,
    Zero,
    zero_of_sum_oracle,
)
from .representation import (
    FactoredRepresentation,
    Representation,
    compose,
    factorize,
    from_kernel,
    minimal_kernel,
    minimal_lifting,
    rescaled,
    validate,
)
from .runner import gen_affine_problem, gen_lasso_problem, monitor_fejer, run
from .zoo import ZooEntry

__version__ = "0.1.0"
