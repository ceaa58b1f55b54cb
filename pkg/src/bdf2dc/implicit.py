"""Per-step implicit solves ``a v - f(t, v) = b``.

Every step of the integrators (and every stage of the one-step starters)
reduces to this shape with ``a > 0``.  Two solvers are provided: plain
fixed-point iteration ``v <- (b + f(t, v)) / a`` and a damped-free Newton
iteration on the residual using a dense LU solve.  Both are stateless and
reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import LinearSolveError, ParameterError, SolverDivergenceError

DEFAULT_TOL = 1e-12
MAX_ITER_FIXED_POINT = 100
MAX_ITER_NEWTON = 25


@dataclass(frozen=True)
class ImplicitStepSpec:
    """One implicit step: coefficient ``a``, constant ``b``, time and guess."""

    a: float
    b: np.ndarray
    t: float
    guess: np.ndarray
    tol: float = DEFAULT_TOL
    max_iter: int = MAX_ITER_FIXED_POINT

    def __post_init__(self):
        if not self.a > 0.0:
            raise ParameterError(f"implicit coefficient a must be positive, got {self.a}")
        if not self.tol > 0.0:
            raise ParameterError("tolerance must be positive")
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=np.float64)))
        object.__setattr__(self, "guess", np.atleast_1d(np.asarray(self.guess, dtype=np.float64)))


class SolveResult(NamedTuple):
    value: np.ndarray
    rhs_value: np.ndarray   # f(t, value), evaluated at the returned iterate
    iterations: int
    residual: float


def _inf_norm(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))


def solve_fixed_point(spec: ImplicitStepSpec, rhs: Callable) -> SolveResult:
    """Solve by the iteration ``v <- (b + f(t, v)) / a``.

    Terminates when the residual ``max|a v - b - f(t, v)|`` drops below
    ``tol * a`` (equivalently: when the fixed-point displacement drops
    below ``tol``).  The mapping contracts when the step is small against
    the Lipschitz constant of f; that is not enforced here, only assumed.
    """
    a, b, t = spec.a, spec.b, spec.t
    v = spec.guess.copy()
    for it in range(spec.max_iter + 1):
        fv = np.atleast_1d(np.asarray(rhs(t, v), dtype=np.float64))
        res = _inf_norm(a * v - b - fv)
        if res <= spec.tol * a:
            return SolveResult(v, fv, it, res)
        v = (b + fv) / a
    raise SolverDivergenceError(
        f"fixed-point iteration did not reach tol={spec.tol:g} within "
        f"{spec.max_iter} iterations at t={t:g} (last residual {res:.3e})",
        residual=res,
        iterations=spec.max_iter,
    )


def solve_newton(spec: ImplicitStepSpec, rhs: Callable, jac: Callable,
                 max_iter: Optional[int] = None) -> SolveResult:
    """Newton iteration on ``F(v) = a v - f(t, v) - b``.

    Each update solves ``(a I - J) dv = F(v)`` by dense LU with partial
    pivoting; convergence is declared when ``max|F(v)|`` drops below
    ``tol max(a, 1) (1 + max|v|)`` (the equation scales with ``a``, so the
    plain ``tol (1 + max|v|)`` test would sit below the attainable
    floating-point floor for small steps).  Exact for linear right-hand
    sides in a single update.
    """
    a, b, t = spec.a, spec.b, spec.t
    limit = MAX_ITER_NEWTON if max_iter is None else max_iter
    scale = max(a, 1.0)
    v = spec.guess.copy()
    d = v.size
    fv = np.atleast_1d(np.asarray(rhs(t, v), dtype=np.float64))
    res = _inf_norm(a * v - fv - b)
    for it in range(limit):
        if res <= spec.tol * scale * (1.0 + _inf_norm(v)):
            return SolveResult(v, fv, it, res)
        J = np.atleast_2d(np.asarray(jac(t, v), dtype=np.float64))
        M = a * np.eye(d) - J
        try:
            dv = np.linalg.solve(M, a * v - fv - b)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveError(
                f"singular linearisation at t={t:g} (a={a:g})"
            ) from exc
        v = v - dv
        fv = np.atleast_1d(np.asarray(rhs(t, v), dtype=np.float64))
        res = _inf_norm(a * v - fv - b)
    if res <= spec.tol * scale * (1.0 + _inf_norm(v)):
        return SolveResult(v, fv, limit, res)
    raise SolverDivergenceError(
        f"Newton iteration did not reach tol={spec.tol:g} within {limit} "
        f"iterations at t={t:g} (last residual {res:.3e})",
        residual=res,
        iterations=limit,
    )


@dataclass(frozen=True)
class SolverConfig:
    """Which implicit solver to run and with what termination settings.

    ``method="auto"`` picks Newton when the problem carries a Jacobian and
    fixed-point iteration otherwise; the CLI ``--solver`` flag overrides.
    """

    method: str = "auto"
    tol: float = DEFAULT_TOL
    max_iter_fixed_point: int = MAX_ITER_FIXED_POINT
    max_iter_newton: int = MAX_ITER_NEWTON

    def __post_init__(self):
        if self.method not in ("auto", "newton", "fixed-point"):
            raise ParameterError(
                f"solver method must be auto|newton|fixed-point, got {self.method!r}"
            )

    def resolve(self, has_jacobian: bool) -> str:
        if self.method != "auto":
            if self.method == "newton" and not has_jacobian:
                raise ParameterError("newton solver requested but the problem has no jacobian")
            return self.method
        return "newton" if has_jacobian else "fixed-point"


def solve_step(a: float, b: np.ndarray, t: float, guess: np.ndarray,
               problem, config: SolverConfig) -> SolveResult:
    """Solve one implicit step for ``problem`` under ``config``."""
    method = config.resolve(problem.jacobian is not None)
    if method == "newton":
        spec = ImplicitStepSpec(a, b, t, guess, config.tol, config.max_iter_newton)
        return solve_newton(spec, problem.rhs, problem.jacobian,
                            max_iter=config.max_iter_newton)
    spec = ImplicitStepSpec(a, b, t, guess, config.tol, config.max_iter_fixed_point)
    return solve_fixed_point(spec, problem.rhs)
