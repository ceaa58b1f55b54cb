"""Two-step difference operator, correction operators and scheme chains.

The base integrator uses the variable-step two-step backward differentiation
operator with per-level kernels

    d0(r) = (1 + 2 r) / (1 + r),    d1(r) = -r / (1 + r),

where ``r`` is the adjacent step ratio; kernels at lag two and beyond vanish
identically.  The correction operators raise the order of the base scheme by
feeding divided differences of an already-computed lower-order trajectory
back into the implicit step:

* third-order term:  ``(tau_n / 3) (dq f^n - dq f^{n-1})`` with
  ``dq f^k = (f^k - f^{k-1}) / tau_k``,
* fourth-order increment: ``tau_n (tau_n + tau_{n-1}) (2 tau_n + tau_{n-1}) / 12``
  times the third divided difference of f over the last four levels.

Both operators are also implemented in their raw Taylor-coefficient form
(``*_reference``); the production code uses the simplified expressions and
the reference forms serve as independent cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, StateError


class Bdf2Kernels(NamedTuple):
    """Per-level convolution kernels of the two-step operator (d0 + d1 = 1)."""

    d0: float
    d1: float


def bdf2_kernels(r: float) -> Bdf2Kernels:
    """Kernels d0 = (1+2r)/(1+r), d1 = -r/(1+r) at step ratio ``r >= 0``."""
    if r < 0.0:
        raise ParameterError(f"step ratio must be nonnegative, got {r}")
    return Bdf2Kernels((1.0 + 2.0 * r) / (1.0 + r), -r / (1.0 + r))


def bdf2_apply(v_n, v_nm1, v_nm2, tau_n: float, tau_nm1: float):
    """Apply the two-step operator to the tail (v^{n-2}, v^{n-1}, v^n).

    Returns ``d0 (v^n - v^{n-1})/tau_n + d1 (v^{n-1} - v^{n-2})/tau_{n-1}``;
    exact for polynomials in t up to degree two.
    """
    d0, d1 = bdf2_kernels(tau_n / tau_nm1)
    return d0 * (v_n - v_nm1) / tau_n + d1 * (v_nm1 - v_nm2) / tau_nm1


def divided_difference(ts: Sequence[float], ys: Sequence):
    """Newton divided difference f[t_0, ..., t_k] for 2 to 4 nodes."""
    if len(ts) != len(ys):
        raise ParameterError("times and values must have matching lengths")
    if not 2 <= len(ts) <= 4:
        raise ParameterError(f"expected 2 to 4 nodes, got {len(ts)}")
    if len(set(float(t) for t in ts)) != len(ts):
        raise ParameterError("divided differences need distinct times")
    table = [np.asarray(y, dtype=np.float64) for y in ys]
    k = len(ts)
    for level in range(1, k):
        table = [
            (table[i + 1] - table[i]) / (ts[i + level] - ts[i])
            for i in range(k - level)
        ]
    return table[0]


def dc3_correction(f_n, f_nm1, f_nm2, tau_n: float, tau_nm1: float):
    """Third-order correction from three cached f-values.

    Simplified form ``(tau_n / 3) (dq f^n - dq f^{n-1})``; vanishes when the
    f-values are affine in t.
    """
    return (tau_n / 3.0) * ((f_n - f_nm1) / tau_n - (f_nm1 - f_nm2) / tau_nm1)


def dc3_correction_reference(f_n, f_nm1, f_nm2, tau_n: float, tau_nm1: float):
    """Raw Taylor-coefficient form of the third-order correction.

    Evaluates ``(w/3!) [-(1+r) tau_n^2 + r (tau_n + tau_{n-1})^2]`` with
    ``w`` twice the second divided difference of f.  Kept as an independent
    cross-check of :func:`dc3_correction`.
    """
    r = tau_n / tau_nm1
    span = tau_n + tau_nm1
    third = 2.0 * divided_difference(
        [0.0, tau_nm1, span], [f_nm2, f_nm1, f_n]
    )
    return (third / 6.0) * (-(1.0 + r) * tau_n**2 + r * span**2)


def d34_correction(f_n, f_nm1, f_nm2, f_nm3, tau_n: float, tau_nm1: float,
                   tau_nm2: float):
    """Increment from third- to fourth-order correction (four f-values).

    ``tau_n (tau_n+tau_{n-1}) (2 tau_n+tau_{n-1}) / 12`` times the third
    divided difference of f over the trailing four levels; vanishes when
    the f-values are quadratic in t.
    """
    t3, t2, t1, t0 = 0.0, tau_nm2, tau_nm2 + tau_nm1, tau_nm2 + tau_nm1 + tau_n
    dd = divided_difference([t3, t2, t1, t0], [f_nm3, f_nm2, f_nm1, f_n])
    coeff = tau_n * (tau_n + tau_nm1) * (2.0 * tau_n + tau_nm1) / 12.0
    return coeff * dd


def dc4_correction(f_n, f_nm1, f_nm2, f_nm3, tau_n: float, tau_nm1: float,
                   tau_nm2: float):
    """Fourth-order correction: third-order part plus the cubic increment."""
    return dc3_correction(f_n, f_nm1, f_nm2, tau_n, tau_nm1) + d34_correction(
        f_n, f_nm1, f_nm2, f_nm3, tau_n, tau_nm1, tau_nm2
    )


def dc4_correction_reference(f_n, f_nm1, f_nm2, f_nm3, tau_n: float,
                             tau_nm1: float, tau_nm2: float):
    """Raw Taylor-coefficient form of the fourth-order correction.

    Uses the cubic-interpolant derivative approximations at the newest node
    (second derivative picks up a cubic contribution ``2 dd3 (2 tau_n +
    tau_{n-1})``, third derivative is ``6 dd3``) and combines the order-3
    and order-4 Taylor coefficients directly.
    """
    r = tau_n / tau_nm1
    span = tau_n + tau_nm1
    ts = [0.0, tau_nm2, tau_nm2 + tau_nm1, tau_nm2 + tau_nm1 + tau_n]
    ys = [f_nm3, f_nm2, f_nm1, f_n]
    dd2 = divided_difference(ts[1:], ys[1:])
    dd3 = divided_difference(ts, ys)
    third = 2.0 * dd2 + 2.0 * dd3 * (2.0 * tau_n + tau_nm1)
    fourth = 6.0 * dd3
    p2 = r * span**2 - (1.0 + r) * tau_n**2
    p3 = r * span**3 - (1.0 + r) * tau_n**3
    return (third / 6.0) * p2 - (fourth / 24.0) * p3


# ---------------------------------------------------------------------------
# scheme chains

#: stage tag -> (level at which the scheme formula starts, lower stage whose
#: cached f-values feed the correction, correction arity)
STAGE_TABLE = {
    "bdf2": (2, None, 0),
    "dc3": (2, "bdf2", 3),
    "dc34": (3, "dc3", 4),
    "dc4p": (3, "bdf2", 4),
}

CHAINS = {
    "bdf2": ("bdf2",),
    "dc3": ("bdf2", "dc3"),
    "dc34": ("bdf2", "dc3", "dc34"),
    "dc4p": ("bdf2", "dc4p"),
}


@dataclass(frozen=True)
class SchemeChain:
    """An ordered cascade of stages, each correcting the previous one.

    Valid cascades are prefixes of (bdf2, dc3, dc34) or (bdf2, dc4p); every
    stage consumes the cached f-values of the stage listed as its source in
    ``STAGE_TABLE``.
    """

    stages: tuple

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if stages not in set(CHAINS.values()):
            raise ParameterError(
                f"invalid stage cascade {stages!r}; valid cascades: "
                f"{sorted(CHAINS.values())}"
            )

    @property
    def name(self) -> str:
        return self.stages[-1]

    def start_level(self, stage: str) -> int:
        return STAGE_TABLE[stage][0]

    @property
    def max_start_level(self) -> int:
        return max(self.start_level(s) for s in self.stages)


def chain_from_name(name: str) -> SchemeChain:
    """Build the cascade ending at ``name`` (bdf2 | dc3 | dc34 | dc4p)."""
    try:
        return SchemeChain(CHAINS[name])
    except KeyError:
        raise ParameterError(
            f"unknown chain {name!r}; expected one of {sorted(CHAINS)}"
        ) from None


@dataclass
class StageHistory:
    """One stage's trajectory: values v^0..v^N and cached f(t_k, v^k)."""

    scheme_tag: str
    values: np.ndarray       # shape (N+1, d)
    f_cache: np.ndarray      # shape (N+1, d)
    start_meta: str = ""     # starter that produced the pre-scheme levels

    def errors_against(self, exact_values: np.ndarray) -> np.ndarray:
        """Pointwise max-abs error per level against reference values."""
        return np.max(np.abs(self.values - exact_values), axis=1)


def correction_term(stage: str, fvals_source: np.ndarray, steps: np.ndarray,
                    n: int):
    """Correction for ``stage`` at level ``n`` from the source f-cache.

    ``fvals_source`` holds the lower stage's cached f-values through level n;
    ``steps[k]`` is tau_k.  The base stage has no correction.
    """
    start, _, arity = STAGE_TABLE[stage]
    if arity == 0:
        return None
    if n < start:
        raise StateError(f"stage {stage!r} has no correction before level {start}")
    if arity == 3:
        return dc3_correction(
            fvals_source[n], fvals_source[n - 1], fvals_source[n - 2],
            steps[n], steps[n - 1],
        )
    return dc4_correction(
        fvals_source[n], fvals_source[n - 1], fvals_source[n - 2],
        fvals_source[n - 3], steps[n], steps[n - 1], steps[n - 2],
    )
