import numpy as np
import pytest

from mpnewton import models as M
from mpnewton import precision as P

SINEPOLY = dict(family="SinePoly", theta_star=(1.05, 2.03, 1.07, 2.01))
POLYEXP = dict(family="PolyExp", theta_star=(6e-7, 2.012e-2), n_points=50, x_range=(-1.0, 1.0))


class Setup:
    def __init__(self, spec):
        self.problem = M.build_problem(spec)
        self.theta_star = M.compute_reference_solution(self.problem, self.problem.theta_star)
        self.x = P.to_f64(self.theta_star)


@pytest.fixture(scope="session")
def sinepoly():
    return Setup(SINEPOLY)


@pytest.fixture(scope="session")
def polyexp():
    return Setup(POLYEXP)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class Quadratic(M.Problem):
    """``f = t.A.t/2 - b.t`` with ``A`` symmetric positive definite."""

    family = "Quadratic"

    def __init__(self, A, b):
        A = np.asarray(A, float)
        b = np.asarray(b, float)
        super().__init__(len(b), np.linalg.lstsq(A, b, rcond=None)[0])
        self.A = A
        self.b = b

    def objective(self, theta, tier=P.Tier.P64, flags=None):
        t = self._theta(theta, tier)
        return P.dot(t, P.matmul(self._data("A", tier), t)) * 0.5 - P.dot(self._data("b", tier), t)

    def gradient(self, theta, tier=P.Tier.P64, flags=None):
        t = self._theta(theta, tier)
        return P.matmul(self._data("A", tier), t) - self._data("b", tier)

    def hessian(self, theta, tier=P.Tier.P64, flags=None):
        return self._data("A", tier)


def quadratic(seed=0, d=3, kappa=10.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = (Q * np.geomspace(1.0, kappa, d)) @ Q.T
    return Quadratic((A + A.T) / 2, rng.standard_normal(d))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
