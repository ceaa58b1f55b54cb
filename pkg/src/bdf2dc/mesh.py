"""Nonuniform time meshes and their step-size / step-ratio bookkeeping.

All integrators in this package operate on a :class:`Mesh`: strictly
increasing time levels ``t_0 = 0 < t_1 < ... < t_N = T`` together with the
step sizes ``tau_k = t_k - t_{k-1}`` and adjacent step ratios
``r_k = tau_k / tau_{k-1}``.  Three stress-test families are provided
(power-law graded, seeded random, fixed-ratio geometric) plus the uniform
mesh.  Meshes are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Mesh:
    """Time levels with cached step sizes and adjacent step ratios.

    Arrays are index-aligned with the level number ``k``:

    * ``levels[k]`` is ``t_k`` for ``0 <= k <= N``,
    * ``steps[k]`` is ``tau_k`` for ``1 <= k <= N`` (``steps[0]`` is 0 and unused),
    * ``ratios[k]`` is ``r_k`` for ``2 <= k <= N``; ``ratios[1]`` is 0 by the
      usual first-step convention and ``ratios[0]`` is unused.
    """

    levels: np.ndarray
    horizon: float
    steps: np.ndarray = field(init=False)
    ratios: np.ndarray = field(init=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        if levels.ndim != 1 or levels.size < 3:
            raise ParameterError("a mesh needs at least levels t_0, t_1, t_2")
        T = float(self.horizon)
        if not np.isfinite(T) or T <= 0.0:
            raise ParameterError(f"horizon must be positive and finite, got {T}")
        if levels[0] != 0.0:
            raise ParameterError("meshes must start at t_0 = 0")
        if abs(levels[-1] - T) > 1e-13 * T:
            raise ParameterError(
                f"final level {levels[-1]!r} does not match the horizon {T!r}"
            )
        steps = np.empty_like(levels)
        steps[0] = 0.0
        steps[1:] = np.diff(levels)
        # strict positivity of the float differences is what the divided
        # differences downstream need; geometric meshes legitimately carry
        # first steps many orders below the horizon scale
        if not (np.all(steps[1:] > 0.0) and np.all(np.isfinite(steps))):
            raise ParameterError("mesh has a non-increasing or degenerate step")
        ratios = np.zeros_like(levels)
        ratios[2:] = steps[2:] / steps[1:-1]
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "ratios", ratios)
        levels.setflags(write=False)
        steps.setflags(write=False)
        ratios.setflags(write=False)

    @property
    def count(self) -> int:
        """Number of steps N."""
        return self.levels.size - 1

    @property
    def tau_max(self) -> float:
        """Maximum step size over the whole mesh."""
        return float(self.steps[1:].max())

    @property
    def ratio_max(self) -> float:
        """Maximum adjacent step ratio r_k over k >= 2."""
        return float(self.ratios[2:].max())

    def write_csv(self, fh) -> None:
        """Write the mesh as CSV rows ``k, t_k, tau_k, r_k``."""
        fh.write("k,t_k,tau_k,r_k\n")
        for k in range(self.count + 1):
            fh.write(
                f"{k},{float(self.levels[k])!r},{float(self.steps[k])!r},"
                f"{float(self.ratios[k])!r}\n"
            )


def _check_size(N: int) -> int:
    N = int(N)
    if N < 3:
        raise ParameterError(f"need at least N = 3 steps, got {N}")
    return N


def uniform_mesh(T: float, N: int) -> Mesh:
    """Uniform mesh with tau_k = T/N and r_k = 1."""
    N = _check_size(N)
    return Mesh(np.linspace(0.0, float(T), N + 1), float(T))


def graded_mesh(T: float, N: int, gamma: float) -> Mesh:
    """Power-law mesh ``t_k = T (k/N)**gamma``.

    The grading concentrates levels near t = 0; the largest adjacent step
    ratio is r_2 = 2**gamma - 1 and the ratios decrease monotonically
    toward 1.  ``gamma = 1`` reproduces the uniform mesh.
    """
    N = _check_size(N)
    gamma = float(gamma)
    if gamma < 1.0:
        raise ParameterError(f"grading exponent must be >= 1, got {gamma}")
    k = np.arange(N + 1, dtype=np.float64)
    return Mesh(float(T) * (k / N) ** gamma, float(T))


def random_mesh(T: float, N: int, seed: int) -> Mesh:
    """Random-step mesh: tau_k proportional to a uniform (0,1) draw.

    Steps are ``tau_k = eps_k T / sum(eps)`` with i.i.d. uniform ``eps_k``.
    A counter-based generator (Philox) keyed by ``seed`` makes the draws
    reproducible across platforms; the final level is pinned to T exactly.
    Roughly a fifth of the ratios of such a mesh exceed the classical
    zero-stability limit 1 + sqrt(2).
    """
    N = _check_size(N)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    eps = 1.0 - rng.random(N)  # in (0, 1], avoids a zero step
    steps = eps * (float(T) / eps.sum())
    levels = np.concatenate(([0.0], np.cumsum(steps)))
    levels[-1] = float(T)
    return Mesh(levels, float(T))


def geometric_mesh(T: float, N: int, ratio: float = 3.0) -> Mesh:
    """Fixed-ratio mesh ``t_k = T ratio**(k-N)`` for k >= 1, with t_0 = 0.

    The mesh keeps a constant adjacent ratio ``r_k = ratio`` for k >= 3
    (the first interval is pinned to start at 0, which makes r_2 = ratio - 1)
    and a constant maximum step ``tau_N = T (1 - 1/ratio)`` regardless of N,
    so refining N does not reduce the step size near T.
    """
    N = _check_size(N)
    ratio = float(ratio)
    if ratio <= 1.0:
        raise ParameterError(f"geometric ratio must exceed 1, got {ratio}")
    k = np.arange(N + 1, dtype=np.float64)
    levels = float(T) * ratio ** (k - N)
    levels[0] = 0.0
    return Mesh(levels, float(T))


_FAMILIES = {
    "graded": graded_mesh,
    "random": random_mesh,
    "geometric": geometric_mesh,
    "uniform": uniform_mesh,
}


def make_mesh(family: str, T: float, N: int, *, gamma: float = 2.0,
              seed: int = 0, ratio: float = 3.0) -> Mesh:
    """Construct a mesh by family name (CLI entry point)."""
    if family == "graded":
        return graded_mesh(T, N, gamma)
    if family == "random":
        return random_mesh(T, N, seed)
    if family == "geometric":
        return geometric_mesh(T, N, ratio)
    if family == "uniform":
        return uniform_mesh(T, N)
    raise ParameterError(
        f"unknown mesh family {family!r}; expected one of {sorted(_FAMILIES)}"
    )
