import numpy as np
import pytest

from bdf2dc.errors import LinearSolveError, ParameterError, SolverDivergenceError
from bdf2dc.implicit import (
    ImplicitStepSpec,
    SolverConfig,
    solve_fixed_point,
    solve_newton,
    solve_step,
)
from bdf2dc.problems import example1


def test_fixed_point_linear_solve():
    spec = ImplicitStepSpec(a=2.0, b=np.array([4.0]), t=0.0, guess=np.array([0.0]))
    res = solve_fixed_point(spec, lambda t, v: np.zeros_like(v))
    assert res.value[0] == pytest.approx(2.0, abs=1e-12)


def test_fixed_point_identity_rhs():
    spec = ImplicitStepSpec(a=2.0, b=np.array([1.0]), t=0.0, guess=np.array([0.3]))
    res = solve_fixed_point(spec, lambda t, v: v)
    assert res.value[0] == pytest.approx(1.0, abs=1e-11)


def test_fixed_point_divergence_reports_residual():
    # iteration map has slope 5/a > 1: diverges
    spec = ImplicitStepSpec(a=2.0, b=np.array([1.0]), t=0.0,
                            guess=np.array([1.0]), max_iter=30)
    with pytest.raises(SolverDivergenceError) as err:
        solve_fixed_point(spec, lambda t, v: 5.0 * v)
    assert err.value.residual is not None and err.value.residual > 0
    assert err.value.iterations == 30


def test_newton_exact_on_linear():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    a, b = 4.0, np.array([1.0, -2.0])
    spec = ImplicitStepSpec(a=a, b=b, t=0.0, guess=np.zeros(2))
    res = solve_newton(spec, lambda t, v: A @ v, lambda t, v: A)
    direct = np.linalg.solve(a * np.eye(2) - A, b)  # oracle: dense solve
    np.testing.assert_allclose(res.value, direct, rtol=1e-12)
    assert res.iterations <= 2


def test_newton_cubic_against_bisection():
    # solve 10 v - (v - v^3) = 5, i.e. v^3 + 9v - 5 = 0
    spec = ImplicitStepSpec(a=10.0, b=np.array([5.0]), t=0.0, guess=np.array([0.0]))
    res = solve_newton(spec, lambda t, v: v - v**3,
                       lambda t, v: np.array([[1.0 - 3.0 * v[0] ** 2]]))

    def g(x):
        return x**3 + 9.0 * x - 5.0

    lo, hi = 0.0, 1.0  # oracle: bisection on the cubic
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    root = 0.5 * (lo + hi)
    assert res.value[0] == pytest.approx(root, abs=1e-10)
    # frozen from the bisection oracle
    assert root == pytest.approx(0.5382309450, abs=5e-9)


def test_cross_solver_agreement_on_scalar_step():
    p = example1()
    a, b, t = 30.0, np.array([29.1]), 0.1
    fp = solve_fixed_point(ImplicitStepSpec(a, b, t, np.array([1.0])), p.rhs)
    nw = solve_newton(ImplicitStepSpec(a, b, t, np.array([1.0])), p.rhs, p.jacobian)
    assert abs(fp.value[0] - nw.value[0]) <= 1e-10


def test_residual_recompute_matches_claim():
    p = example1()
    spec = ImplicitStepSpec(a=7.0, b=np.array([6.5]), t=0.4, guess=np.array([1.0]))
    for solver in (lambda s: solve_fixed_point(s, p.rhs),
                   lambda s: solve_newton(s, p.rhs, p.jacobian)):
        res = solver(spec)
        again = float(np.max(np.abs(spec.a * res.value - spec.b
                                    - p.rhs(spec.t, res.value))))
        scale = max(1.0, abs(res.residual))
        assert abs(again - res.residual) <= 2 * np.finfo(float).eps * scale


def test_newton_singular_linearisation():
    # a - J = 0 at the guess
    spec = ImplicitStepSpec(a=1.0, b=np.array([2.0]), t=0.0, guess=np.array([0.0]))
    with pytest.raises(LinearSolveError):
        solve_newton(spec, lambda t, v: v + 1.0, lambda t, v: np.array([[1.0]]))


def test_rhs_value_cached_at_returned_iterate():
    p = example1()
    spec = ImplicitStepSpec(a=3.0, b=np.array([2.0]), t=0.2, guess=np.array([1.0]))
    for res in (solve_fixed_point(spec, p.rhs),
                solve_newton(spec, p.rhs, p.jacobian)):
        np.testing.assert_array_equal(res.rhs_value, p.rhs(spec.t, res.value))


def test_spec_validation():
    with pytest.raises(ParameterError):
        ImplicitStepSpec(a=-1.0, b=np.array([0.0]), t=0.0, guess=np.array([0.0]))
    with pytest.raises(ParameterError):
        ImplicitStepSpec(a=1.0, b=np.array([0.0]), t=0.0, guess=np.array([0.0]),
                         tol=0.0)
    with pytest.raises(ParameterError):
        SolverConfig(method="magic")


def test_solver_config_resolution():
    assert SolverConfig().resolve(has_jacobian=True) == "newton"
    assert SolverConfig().resolve(has_jacobian=False) == "fixed-point"
    assert SolverConfig(method="fixed-point").resolve(True) == "fixed-point"
    with pytest.raises(ParameterError):
        SolverConfig(method="newton").resolve(False)


def test_solve_step_uses_config():
    p = example1()
    res = solve_step(5.0, np.array([4.8]), 0.3, np.array([1.0]), p,
                     SolverConfig(method="fixed-point"))
    res2 = solve_step(5.0, np.array([4.8]), 0.3, np.array([1.0]), p,
                      SolverConfig(method="newton"))
    assert abs(res.value[0] - res2.value[0]) <= 1e-10
