import math

import numpy as np
import pytest

from marketflow.errors import DomainError
from marketflow.optimize import simplex_minimize


def rosenbrock(v):
    x, y = v
    return (1 - x) ** 2 + 100 * (y - x * x) ** 2


def test_quadratic():
    x, fun, converged, iterations = simplex_minimize(lambda v: (v[0] - 3) ** 2, [0.0])
    assert converged
    assert x[0] == pytest.approx(3.0, abs=1e-6)
    assert fun < 1e-10
    assert iterations <= 2000


def test_sphere():
    res = simplex_minimize(lambda v: v[0] ** 2 + v[1] ** 2, [1.0, 1.0])
    assert res.converged
    np.testing.assert_allclose(res.x, [0.0, 0.0], atol=1e-6)


def test_rosenbrock():
    res = simplex_minimize(rosenbrock, [-1.2, 1.0])
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-3)


def test_iteration_cap():
    res = simplex_minimize(rosenbrock, [-1.2, 1.0], max_iterations=5)
    assert not res.converged
    assert res.iterations == 5
    assert len(res.trace) == 6


def test_trace_is_non_increasing():
    res = simplex_minimize(rosenbrock, [-1.2, 1.0])
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.trace[-1] == res.fun


def test_non_finite_start_rejected():
    with pytest.raises(DomainError):
        simplex_minimize(lambda v: math.log(v[0]) if v[0] > 0 else math.nan, [-1.0])


def test_non_finite_during_search_is_penalized():
    # infinite for x <= 0; the simplex is pushed across that edge early on
    def f(v):
        return math.inf if v[0] <= 0 else (v[0] - 0.5) ** 2 - math.log(v[0])

    res = simplex_minimize(f, [2.0])
    assert res.converged
    assert res.x[0] == pytest.approx((0.5 + math.sqrt(0.25 + 2)) / 2, abs=1e-6)


def test_nan_treated_as_infinite():
    res = simplex_minimize(lambda v: float("nan") if v[0] > 4 else (v[0] - 1) ** 2, [3.0])
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)


def test_deterministic():
    a = simplex_minimize(rosenbrock, [-1.2, 1.0])
    b = simplex_minimize(rosenbrock, [-1.2, 1.0])
    assert a.x.tolist() == b.x.tolist()
    assert a.trace == b.trace


@pytest.mark.parametrize("start", [[0.0, 0.0, 0.0], [5.0, -2.0, 1.0]])
def test_three_dimensions(start):
    target = np.array([1.0, -2.0, 0.5])
    res = simplex_minimize(lambda v: float(np.sum((v - target) ** 2)), start)
    assert res.converged
    np.testing.assert_allclose(res.x, target, atol=1e-6)
