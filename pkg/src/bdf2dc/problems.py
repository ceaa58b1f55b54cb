"""ODE problem abstraction and the built-in test problems.

A problem bundles the right-hand side ``f(t, v)`` with an optional Jacobian
and an optional exact solution.  Values are 1-D float64 arrays of length
``dimension`` throughout; the exact solution, when present, supplies both
the initial state and the reference trajectory for error tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, ParameterError

Vector = np.ndarray
RhsFn = Callable[[float, Vector], Vector]
JacFn = Callable[[float, Vector], np.ndarray]
ExactFn = Callable[[float], Vector]


@dataclass(frozen=True)
class OdeProblem:
    """An initial value problem dv/dt = f(t, v), v(0) = v0.

    Problems are immutable value objects and safe to share between runs.
    ``fast_tag``/``fast_params`` identify built-in problems to the compiled
    stepping loop; user-defined problems leave them unset and integrate
    through the pure-Python engine.
    """

    name: str
    dimension: int
    rhs: RhsFn
    initial: Vector
    jacobian: Optional[JacFn] = None
    exact: Optional[ExactFn] = None
    lipschitz_hint: Optional[float] = None
    fast_tag: Optional[str] = None
    fast_params: tuple = field(default=())

    def __post_init__(self):
        v0 = np.asarray(self.initial, dtype=np.float64).reshape(self.dimension)
        v0.setflags(write=False)
        object.__setattr__(self, "initial", v0)
        if self.lipschitz_hint is not None and self.lipschitz_hint <= 0:
            raise ParameterError("lipschitz_hint must be positive when given")

    def exact_at(self, t: float) -> Vector:
        """Exact solution at time t; errors if the problem carries none."""
        if self.exact is None:
            raise CapabilityError(f"problem {self.name!r} has no exact solution")
        return np.asarray(self.exact(t), dtype=np.float64).reshape(self.dimension)


def example1() -> OdeProblem:
    """Scalar oscillatory model v' = v cos(t) with solution exp(sin t)."""

    def rhs(t, v):
        return v * np.cos(t)

    def jac(t, v):
        return np.array([[np.cos(t)]])

    def exact(t):
        return np.array([np.exp(np.sin(t))])

    return OdeProblem(
        name="example1",
        dimension=1,
        rhs=rhs,
        initial=np.array([1.0]),
        jacobian=jac,
        exact=exact,
        lipschitz_hint=1.0,
        fast_tag="cosine-growth",
    )


_STIFF_MATRIX = np.array(
    [
        [-1.0, 1.0, 100.0],
        [0.0, 0.0, 100.0],
        [0.0, -100.0, 0.0],
    ]
)
_STIFF_MATRIX.setflags(write=False)


def example2() -> OdeProblem:
    """Stiff 3x3 linear system u' = A u with fast rotation at frequency 100.

    The solution mixes a slow decaying mode exp(-t) with cos/sin modes at
    frequency 100, so uniform meshes need very small steps to resolve it.
    """

    A = _STIFF_MATRIX

    def rhs(t, v):
        return A @ v

    def jac(t, v):
        return A

    e_decay = np.array([1.0, 0.0, 0.0])
    e_cos = np.array([1.0, 1.0, 1.0])
    e_sin = np.array([1.0, 1.0, -1.0])

    def exact(t):
        return (
            np.exp(-t) * e_decay
            + np.cos(100.0 * t) * e_cos
            + np.sin(100.0 * t) * e_sin
        )

    return OdeProblem(
        name="example2",
        dimension=3,
        rhs=rhs,
        initial=np.array([2.0, 1.0, 1.0]),
        jacobian=jac,
        exact=exact,
        lipschitz_hint=200.0,
        fast_tag="linear-3d",
        fast_params=tuple(A.ravel()),
    )


def example3(v0: float = 0.5) -> OdeProblem:
    """Bistable scalar model v' = v - v**3.

    Solutions flow monotonically toward sign(v0); the closed-form solution
    is ``v0 / sqrt(exp(-2t) + v0**2 (1 - exp(-2t)))``.
    """
    v0 = float(v0)
    if v0 == 0.0:
        raise ParameterError("v0 = 0 sits on the unstable equilibrium")

    # spelled as repeated products so the compiled loop's arithmetic
    # matches elementwise (pow() rounds v**3 differently by one ulp)
    def rhs(t, v):
        return v - v * v * v

    def jac(t, v):
        return np.array([[1.0 - 3.0 * v[0] * v[0]]])

    def exact(t):
        decay = np.exp(-2.0 * t)
        return np.array([v0 / np.sqrt(decay + v0 * v0 * (1.0 - decay))])

    return OdeProblem(
        name="example3",
        dimension=1,
        rhs=rhs,
        initial=np.array([v0]),
        jacobian=jac,
        exact=exact,
        lipschitz_hint=max(1.0, abs(3.0 * v0 * v0 - 1.0)),
        fast_tag="bistable-cubic",
    )


def by_name(name: str, **kwargs) -> OdeProblem:
    """Look up a built-in problem by CLI name."""
    builders = {"example1": example1, "example2": example2, "example3": example3}
    try:
        builder = builders[name]
    except KeyError:
        raise ParameterError(
            f"unknown problem {name!r}; expected one of {sorted(builders)}"
        ) from None
    return builder(**kwargs)
