import math

import numpy as np
import pytest

from bdf2dc.errors import ParameterError
from bdf2dc.problems import by_name, example1, example2, example3

HORIZONS = {"example1": 10 * math.pi, "example2": 5.0, "example3": 100.0}


def test_example1_values():
    p = example1()
    assert p.dimension == 1
    assert p.exact_at(0.0)[0] == pytest.approx(1.0)
    assert p.rhs(0.0, np.array([1.0]))[0] == pytest.approx(1.0)
    assert p.exact_at(math.pi / 2)[0] == pytest.approx(math.e, rel=1e-15)


def test_example2_values():
    p = example2()
    assert p.dimension == 3
    np.testing.assert_allclose(p.exact_at(0.0), [2.0, 1.0, 1.0], rtol=1e-15)
    # oracle: hand matrix-vector product A (2,1,1)
    np.testing.assert_allclose(
        p.rhs(0.0, np.array([2.0, 1.0, 1.0])), [99.0, 100.0, -100.0], rtol=1e-15
    )
    J0 = p.jacobian(0.0, p.initial)
    J1 = p.jacobian(3.7, np.array([5.0, -1.0, 2.0]))
    np.testing.assert_array_equal(J0, J1)


def test_example3_values():
    p = example3(0.5)
    assert p.exact_at(0.0)[0] == pytest.approx(0.5)
    assert p.rhs(0.0, np.array([0.5]))[0] == pytest.approx(0.375)
    steady = example3(1.0)
    for t in (0.0, 1.0, 17.3):
        assert steady.exact_at(t)[0] == pytest.approx(1.0, abs=1e-14)


def test_example3_rejects_unstable_origin():
    with pytest.raises(ParameterError):
        example3(0.0)


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_exact_solution_satisfies_ode(name):
    # oracle: central finite difference of the exact solution, step 1e-6
    p = by_name(name)
    T = HORIZONS[name]
    rng = np.random.Generator(np.random.Philox(key=42))
    h = 1e-6
    for t in rng.uniform(h, min(T, 20.0) - h, size=100):
        deriv = (p.exact_at(t + h) - p.exact_at(t - h)) / (2 * h)
        rhs = p.rhs(t, p.exact_at(t))
        tol = 1e-6 * (1.0 + np.abs(p.exact_at(t)))
        assert np.all(np.abs(deriv - rhs) <= tol)


@pytest.mark.parametrize("v0", [-1.5, -0.5, 0.5, 1.5])
def test_example3_monotone_toward_attractor(v0):
    p = example3(v0)
    ts = np.linspace(0.0, 30.0, 400)
    vals = np.array([p.exact_at(t)[0] for t in ts])
    target = math.copysign(1.0, v0)
    gaps = np.abs(vals - target)
    assert np.all(np.diff(gaps) <= 1e-12)
    assert abs(vals[-1] - target) < 1e-9


def test_by_name_unknown():
    with pytest.raises(ParameterError):
        by_name("example9")
