"""Adaptive step-size control driven by the gap between cascade stages.

Because consecutive stages of the cascade differ by one order of accuracy,
their relative discrepancy at a level is an immediate error estimator.  The
controller compares it against a tolerance: too large means reject the level
and redo it with the recalculated step, otherwise accept and use the
recalculated step for the next level.  The step proposal is

    tau_new = safety * tau * sqrt(tol / estimate),

clamped to ``[tau_min, tau_max]`` on acceptance and only floored at
``tau_min`` on rejection.  The run starts from a single starter level at
``t_1`` and the last step is truncated to land exactly on the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AdaptiveStepError, ParameterError, StateError
from .implicit import SolverConfig
from .mesh import Mesh
from .schemes import (
    STAGE_TABLE,
    StageHistory,
    dc3_correction,
    dc4_correction,
)
from .engine import _resolve_chain, _resolve_starters, stage_step
from .starters import starting_values

#: estimator name -> (reference stage, refined stage)
ESTIMATORS = {
    "e23": ("bdf2", "dc3"),
    "e34": ("dc3", "dc34"),
    "e24p": ("bdf2", "dc4p"),
}

# floor applied to the estimate before the square root; the clamp to
# tau_max then governs the proposal
_ESTIMATE_FLOOR = 1e-300


@dataclass(frozen=True)
class AdaptiveConfig:
    """Controller parameters (defaults follow the reference experiment)."""

    safety: float = 1e3
    tol: float = 1e-1
    tau_min: float = 1e-3
    tau_max: float = 1e-1
    t1: Optional[float] = None      # first level; defaults to tau_min
    estimator: str = "e23"
    max_rejects_per_level: int = 20

    def __post_init__(self):
        if not (0.0 < self.tau_min <= self.tau_max):
            raise ParameterError("need 0 < tau_min <= tau_max")
        if self.safety <= 0.0 or self.tol <= 0.0:
            raise ParameterError("safety factor and tolerance must be positive")
        if self.estimator not in ESTIMATORS:
            raise ParameterError(
                f"unknown estimator {self.estimator!r}; expected one of "
                f"{sorted(ESTIMATORS)}"
            )

    @property
    def first_level(self) -> float:
        return self.tau_min if self.t1 is None else self.t1


def _relative_gap(v_low, v_high, n: int) -> float:
    denom = float(np.max(np.abs(v_low)))
    if denom == 0.0:
        raise StateError(
            f"degenerate estimate: reference stage vanishes at level {n}"
        )
    return float(np.max(np.abs(v_high - v_low))) / denom


def relative_estimator(kind: str, histories: dict, n: int) -> float:
    """Relative max-norm gap between the estimator's two stages at level n.

    ``histories`` maps stage tags to per-level value sequences or to
    :class:`~bdf2dc.schemes.StageHistory` objects.
    """
    low, high = ESTIMATORS[kind]
    try:
        rows_low = getattr(histories[low], "values", histories[low])
        rows_high = getattr(histories[high], "values", histories[high])
        v_low, v_high = rows_low[n], rows_high[n]
    except (KeyError, IndexError):
        raise StateError(
            f"estimator {kind!r} needs stages {low!r} and {high!r} computed "
            f"at level {n}"
        ) from None
    return _relative_gap(v_low, v_high, n)


def propose_step(config: AdaptiveConfig, tau: float, estimate: float,
                 reject: bool = False) -> float:
    """Recalculated step from the estimate.

    The acceptance path clamps to ``[tau_min, tau_max]``; the rejection
    path only applies the ``tau_min`` floor.
    """
    if estimate < 0.0:
        raise ParameterError("estimate must be nonnegative")
    tau_new = config.safety * tau * np.sqrt(config.tol / max(estimate, _ESTIMATE_FLOOR))
    if reject:
        return max(config.tau_min, float(tau_new))
    return min(max(config.tau_min, float(tau_new)), config.tau_max)


@dataclass
class AdaptiveResult:
    """Accepted trajectory, accepted mesh, and controller telemetry."""

    histories: dict
    mesh: Mesh
    estimates: np.ndarray     # per accepted level (0 on starting levels)
    rejects: np.ndarray       # rejections spent on each accepted level
    total_rejects: int = 0

    def write_mesh_csv(self, fh) -> None:
        """Accepted-mesh artifact: level, t, tau, estimate, rejects."""
        fh.write("k,t_k,tau_k,estimate,rejects\n")
        for k in range(self.mesh.count + 1):
            fh.write(
                f"{k},{float(self.mesh.levels[k])!r},{float(self.mesh.steps[k])!r},"
                f"{float(self.estimates[k])!r},{int(self.rejects[k])}\n"
            )


def _advance_candidates(chain, problem, solver, taus, values, fvals, n,
                        t_n, tau_n):
    """Candidate values/f-values for every due stage at the trial level n."""
    tau_nm1 = taus[n - 1]
    cand_v, cand_f = {}, {}
    for tag in chain.stages:
        start, source, arity = STAGE_TABLE[tag]
        if n < start:
            continue
        if arity == 0:
            corr = None
        elif arity == 3:
            fs = fvals[source]
            corr = dc3_correction(cand_f[source], fs[n - 1], fs[n - 2],
                                  tau_n, tau_nm1)
        else:
            fs = fvals[source]
            corr = dc4_correction(cand_f[source], fs[n - 1], fs[n - 2],
                                  fs[n - 3], tau_n, tau_nm1, taus[n - 2])
        result = stage_step(tag, t_n, tau_n, tau_nm1, values[tag][n - 1],
                            values[tag][n - 2], corr, problem, solver)
        cand_v[tag] = result.value
        cand_f[tag] = result.rhs_value
    return cand_v, cand_f


def adaptive_integrate(problem, chain, config: AdaptiveConfig, T: float,
                       starters=None,
                       solver: SolverConfig = SolverConfig()) -> AdaptiveResult:
    """Integrate to the horizon T under adaptive step control.

    Raises :class:`AdaptiveStepError` when a level keeps rejecting at the
    step floor (``max_rejects_per_level`` retries) or when a rejection
    proposes a step that is neither smaller nor at the floor.
    """
    chain = _resolve_chain(chain)
    low, high = ESTIMATORS[config.estimator]
    for needed in (low, high):
        if needed not in chain.stages:
            raise ParameterError(
                f"estimator {config.estimator!r} needs stage {needed!r} in "
                f"the chain"
            )
    T = float(T)
    t1 = config.first_level
    if not 0.0 < t1 <= T - config.tau_min:
        raise ParameterError("horizon leaves no room after the first level")
    starter_names = _resolve_starters(chain, starters)

    # seed level 0 plus each stage's own starter levels; four-level stages
    # also get a starter value at t_2 = t_1 + tau_min
    max_start = chain.max_start_level
    start_ts = [0.0, t1]
    if max_start == 3:
        start_ts.append(min(t1 + config.tau_min, T))
    values, fvals = {}, {}
    for tag, starter in zip(chain.stages, starter_names):
        start = chain.start_level(tag)
        vs = [np.asarray(problem.initial, dtype=np.float64)]
        vs += starting_values(problem, starter, start_ts[:start], start, solver)
        values[tag] = vs
        fvals[tag] = [
            np.atleast_1d(np.asarray(problem.rhs(start_ts[k], vs[k]),
                                     dtype=np.float64))
            for k in range(start)
        ]
    ts = [0.0, t1]
    taus = [0.0, t1]
    estimates = [0.0, 0.0]
    rejects = [0, 0]

    # catch-up: three-level stages still owe computed values on any extra
    # starting levels of the four-level stages (no step control there)
    for n in range(2, max_start):
        t_n, tau_n = start_ts[n], start_ts[n] - start_ts[n - 1]
        cand_v, cand_f = _advance_candidates(
            chain, problem, solver, taus, values, fvals, n, t_n, tau_n
        )
        ts.append(t_n)
        taus.append(tau_n)
        estimates.append(0.0)
        rejects.append(0)
        for tag in cand_v:
            values[tag].append(cand_v[tag])
            fvals[tag].append(cand_f[tag])

    tau = taus[-1]
    total_rejects = 0
    while ts[-1] < T:
        n = len(ts)
        remaining = T - ts[-1]
        # land exactly on T and never leave a tail shorter than the floor
        if remaining <= config.tau_max:
            tau = remaining
        elif remaining <= config.tau_max + config.tau_min:
            tau = remaining / 2.0
        tau = min(tau, remaining)
        rejected_here = 0
        while True:
            if remaining - tau <= 1e-12 * T:
                tau = remaining
                t_n = T
            else:
                t_n = ts[-1] + tau
            cand_v, cand_f = _advance_candidates(
                chain, problem, solver, taus, values, fvals, n, t_n, tau
            )
            est = _relative_gap(cand_v[low], cand_v[high], n)
            if est <= config.tol:
                break
            rejected_here += 1
            total_rejects += 1
            if rejected_here > config.max_rejects_per_level:
                raise AdaptiveStepError(
                    f"level {n} rejected more than "
                    f"{config.max_rejects_per_level} times (t={ts[-1]:g}, "
                    f"estimate {est:.3e} > tol {config.tol:g})"
                )
            retry = min(propose_step(config, tau, est, reject=True), remaining)
            if retry >= tau and retry > config.tau_min:
                raise AdaptiveStepError(
                    f"rejection at level {n} proposed a non-decreasing step "
                    f"{retry:g} >= {tau:g} above the floor (t={ts[-1]:g})"
                )
            tau = retry
        ts.append(t_n)
        taus.append(tau)
        estimates.append(est)
        rejects.append(rejected_here)
        for tag in cand_v:
            values[tag].append(cand_v[tag])
            fvals[tag].append(cand_f[tag])
        tau = propose_step(config, tau, est, reject=False)

    mesh = Mesh(np.asarray(ts), T)
    histories = {
        tag: StageHistory(tag, np.stack(values[tag]), np.stack(fvals[tag]),
                          starter)
        for (tag, starter) in zip(chain.stages, starter_names)
    }
    return AdaptiveResult(
        histories, mesh, np.asarray(estimates), np.asarray(rejects),
        total_rejects,
    )
