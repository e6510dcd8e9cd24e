import itertools

import numpy as np

from frugal_split import zoo
from frugal_split.representation import gamma_matrix


def random_kernel(rng, n, p, F=()):
    """A random p-kernel: lower-triangular L with the diagonal pattern of F, minus Γ_p."""
    L = np.tril(rng.normal(size=(n, n)), -1)
    L *= rng.random(size=(n, n)) < 0.7
    for i in range(1, n + 1):
        if i not in F:
            L[i - 1, i - 1] = rng.uniform(0.2, 2.0)
    return L - gamma_matrix(p, n)


def random_kernel_problem(rng, n_max=6):
    """Draw (n, p, F) and a matching random kernel."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, n + 1))
    others = [i for i in range(1, n + 1) if i != p]
    F = {i for i in others if rng.random() < 0.3}
    return random_kernel(rng, n, p, F), p, F


def all_forward_sets(n):
    """Every F strictly inside {1..n}, as frozensets."""
    for r in range(n):
        for F in itertools.combinations(range(1, n + 1), r):
            yield frozenset(F)


# One representative of each zoo family, all with parameters inside their
# convergence conditions for unit cocoercivity.
ZOO_SAMPLES = [
    ("forward-backward", dict(gamma=1.2)),
    ("douglas-rachford", dict(gamma=0.7)),
    ("davis-yin", dict(gamma=1.3)),
    ("chambolle-pock", dict(tau=0.5, sigma=1.5)),
    ("fb-momentum-forward", dict(gamma=0.5, theta=0.2)),
    ("fb-nesterov", dict(gamma=0.5, theta=0.1)),
    ("ryu-three", dict(theta=0.6)),
    ("malitsky-tam", dict(n=4, theta=0.5)),
    ("campoy", dict(n=3, gamma=0.8, theta=1.2)),
    ("projective", dict(tau=(1.0, 1.0, 1.0), theta=0.5)),
    ("new-minimal", dict(n=5, f=2, lam=0.5, theta=0.6)),
]


def zoo_samples():
    return [zoo.build(name, **params) for name, params in ZOO_SAMPLES]


# Lines reported by tests/test_acceptance.py, echoed at the end of the run.
ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
