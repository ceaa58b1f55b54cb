"""One-step starting schemes for the multi-step cascades.

Three-level stages need a computed value at t_1 and four-level stages need
values at t_1 and t_2 before their own formula can run.  Available starters:

* ``exact`` - copy the problem's exact solution (reference runs),
* ``bdf1``  - backward Euler, first order,
* ``rk2``   - two-stage singly diagonally implicit RK, second order, L-stable,
* ``rk3``   - two-stage singly diagonally implicit RK, third order.

A starter is applied once per missing level, each step continuing from the
value it produced at the previous level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .implicit import SolverConfig, solve_step

STARTERS = ("exact", "bdf1", "rk2", "rk3")


@dataclass(frozen=True)
class SdirkTableau:
    """Two-stage singly diagonally implicit Runge-Kutta tableau."""

    name: str
    order: int
    matrix: tuple      # ((a11, 0), (a21, a22)) with a11 = a22 = gamma
    weights: tuple
    nodes: tuple

    @property
    def stage_count(self) -> int:
        return len(self.nodes)

    @property
    def gamma(self) -> float:
        return self.matrix[0][0]

    def check(self) -> None:
        for row, node in zip(self.matrix, self.nodes):
            if abs(sum(row) - node) > 1e-14:
                raise ParameterError(f"tableau {self.name}: row sum != node")
        if abs(sum(self.weights) - 1.0) > 1e-14:
            raise ParameterError(f"tableau {self.name}: weights do not sum to 1")


_G2 = (2.0 - math.sqrt(2.0)) / 2.0
SDIRK2 = SdirkTableau(
    name="rk2",
    order=2,
    matrix=((_G2, 0.0), (1.0 - _G2, _G2)),
    weights=(1.0 - _G2, _G2),
    nodes=(_G2, 1.0),
)

_G3 = (3.0 + math.sqrt(3.0)) / 6.0
SDIRK3 = SdirkTableau(
    name="rk3",
    order=3,
    matrix=((_G3, 0.0), (1.0 - 2.0 * _G3, _G3)),
    weights=(0.5, 0.5),
    nodes=(_G3, 1.0 - _G3),
)

TABLEAUS = {"rk2": SDIRK2, "rk3": SDIRK3}

#: formal order of accuracy of each starter (exact values carry no error)
STARTER_ORDER = {"exact": math.inf, "bdf1": 1, "rk2": 2, "rk3": 3}


def bdf1_step(problem, t_prev: float, v_prev, tau: float,
              config: SolverConfig = SolverConfig()):
    """Backward Euler step: solve (v - v_prev)/tau = f(t_prev + tau, v)."""
    if tau <= 0.0:
        raise ParameterError("step size must be positive")
    a = 1.0 / tau
    v_prev = np.atleast_1d(np.asarray(v_prev, dtype=np.float64))
    result = solve_step(a, a * v_prev, t_prev + tau, v_prev, problem, config)
    return result.value


def sdirk_step(tableau: SdirkTableau, problem, t_prev: float, v_prev,
               tau: float, config: SolverConfig = SolverConfig()):
    """One step of a two-stage SDIRK method.

    Each stage solve reuses the implicit machinery with a = 1/(gamma tau)
    and the incoming value as initial guess.
    """
    if tau <= 0.0:
        raise ParameterError("step size must be positive")
    v_prev = np.atleast_1d(np.asarray(v_prev, dtype=np.float64))
    gamma = tableau.gamma
    a = 1.0 / (gamma * tau)
    slopes = []
    for i, node in enumerate(tableau.nodes):
        known = v_prev.copy()
        for j in range(i):
            known = known + tau * tableau.matrix[i][j] * slopes[j]
        # stage solve: Y - gamma tau f(t_i, Y) = known
        t_i = t_prev + node * tau
        result = solve_step(a, a * known, t_i, v_prev, problem, config)
        slopes.append(result.rhs_value)
    v = v_prev.copy()
    for w, k in zip(tableau.weights, slopes):
        v = v + tau * w * k
    return v


def sdirk2_step(problem, t_prev, v_prev, tau, config=SolverConfig()):
    return sdirk_step(SDIRK2, problem, t_prev, v_prev, tau, config)


def sdirk3_step(problem, t_prev, v_prev, tau, config=SolverConfig()):
    return sdirk_step(SDIRK3, problem, t_prev, v_prev, tau, config)


def exact_start(problem, t: float):
    """Exact solution value at t (requires the problem to carry one)."""
    return problem.exact_at(t)


def starting_values(problem, starter: str, levels, n_start: int,
                    config: SolverConfig = SolverConfig()) -> list:
    """Values for levels 1 .. n_start-1 produced by ``starter``.

    One-step starters are applied successively: the level-2 value continues
    from the starter's own level-1 value, not from the exact solution.
    """
    if starter not in STARTERS:
        raise ParameterError(
            f"unknown starter {starter!r}; expected one of {STARTERS}"
        )
    out = []
    v = np.asarray(problem.initial, dtype=np.float64)
    for k in range(1, n_start):
        if starter == "exact":
            v = exact_start(problem, float(levels[k]))
        elif starter == "bdf1":
            v = bdf1_step(problem, float(levels[k - 1]), v,
                          float(levels[k] - levels[k - 1]), config)
        else:
            v = sdirk_step(TABLEAUS[starter], problem, float(levels[k - 1]), v,
                           float(levels[k] - levels[k - 1]), config)
        out.append(v)
    return out
