"""Trajectory drivers: advance the scheme cascade level by level.

The cascade is advanced in lockstep: at each time level every stage is
solved in chain order (base stage first), so a stage's correction always
reads the already-computed level-n solution of its source stage.  Each
implicit solve is

    a v - f(t_n, v) = a v^{n-1} - d1 dq^{n-1} - correction (+ injected noise)

with ``a = d0 / tau_n`` and ``dq^{n-1}`` the previous difference quotient.
Integration of one trajectory is strictly sequential; distinct calls are
independent and may run in parallel.

Two engines produce identical trajectories (up to roundoff): a pure-Python
loop that works for any problem, and a compiled loop for the built-in
problems (see ``_fastloop``).  ``engine="auto"`` picks the compiled loop
when it is available and applicable; set ``BDF2DC_PURE=1`` or pass
``engine="pure"`` to force the fallback.
"""

from __future__ import annotations

import os
from typing import Optional, Union

import numpy as np

from .errors import ParameterError, SolverDivergenceError
from .implicit import SolverConfig, solve_step
from .mesh import Mesh
from .problems import OdeProblem
from .schemes import (
    STAGE_TABLE,
    SchemeChain,
    StageHistory,
    bdf2_kernels,
    chain_from_name,
    correction_term,
)
from .starters import STARTERS, starting_values

try:
    from . import _fastloop
except ImportError:  # pragma: no cover - source checkout without build
    _fastloop = None

_FAST_KIND = {"cosine-growth": 1, "linear-3d": 2, "bistable-cubic": 3}
_STAGE_CODE = {"bdf2": 0, "dc3": 1, "dc34": 2, "dc4p": 3}


def compiled_engine_available() -> bool:
    return _fastloop is not None


def _resolve_chain(chain: Union[str, SchemeChain]) -> SchemeChain:
    return chain_from_name(chain) if isinstance(chain, str) else chain


def _resolve_starters(chain: SchemeChain, starters) -> tuple:
    if starters is None:
        starters = "exact"
    if isinstance(starters, str):
        names = tuple(s.strip() for s in starters.split(","))
    else:
        names = tuple(starters)
    if len(names) == 1:
        names = names * len(chain.stages)
    if len(names) != len(chain.stages):
        raise ParameterError(
            f"chain {chain.name!r} has {len(chain.stages)} stages but "
            f"{len(names)} starters were given"
        )
    for s in names:
        if s not in STARTERS:
            raise ParameterError(f"unknown starter {s!r}; expected one of {STARTERS}")
    return names


def stage_step(tag: str, t_n: float, tau_n: float, tau_nm1: float,
               v_nm1, v_nm2, corr, problem, config: SolverConfig,
               noise_vec=None):
    """Solve one stage at one level from its two previous values.

    ``corr`` is the (already scaled) correction term or None for the base
    stage.  Returns the implicit solver result (value and cached f).
    """
    d0, d1 = bdf2_kernels(tau_n / tau_nm1)
    a = d0 / tau_n
    dq = (v_nm1 - v_nm2) / tau_nm1
    b = a * v_nm1 - d1 * dq
    if corr is not None:
        b = b - corr
    if noise_vec is not None:
        b = b + noise_vec
    return solve_step(a, b, t_n, v_nm1, problem, config)


def advance_level(chain: SchemeChain, values: dict, fvals: dict, mesh: Mesh,
                  n: int, problem: OdeProblem, config: SolverConfig,
                  correction_scale: float = 1.0,
                  noise: Optional[dict] = None) -> None:
    """Advance every due stage of the cascade at level ``n`` in place.

    ``values[tag]`` / ``fvals[tag]`` are (N+1, d) arrays filled through
    level n-1 (lower stages fill level n as this runs).
    """
    steps, levels = mesh.steps, mesh.levels
    for tag in chain.stages:
        start, source, _ = STAGE_TABLE[tag]
        if n < start:
            continue
        corr = None
        if source is not None:
            corr = correction_term(tag, fvals[source], steps, n)
            if correction_scale != 1.0:
                corr = correction_scale * corr
        eps = noise[tag][n] if noise is not None and tag in noise else None
        try:
            result = stage_step(
                tag, float(levels[n]), float(steps[n]), float(steps[n - 1]),
                values[tag][n - 1], values[tag][n - 2], corr,
                problem, config, eps,
            )
        except SolverDivergenceError as exc:
            raise SolverDivergenceError(
                f"stage {tag!r} diverged at level {n} (t={levels[n]:g}): {exc}",
                residual=exc.residual, iterations=exc.iterations,
            ) from exc
        values[tag][n] = result.value
        fvals[tag][n] = result.rhs_value


def _prepare_arrays(problem, mesh, chain, starter_names, config):
    N, d = mesh.count, problem.dimension
    values, fvals, meta = {}, {}, {}
    for tag, starter in zip(chain.stages, starter_names):
        start = chain.start_level(tag)
        v = np.empty((N + 1, d))
        f = np.empty((N + 1, d))
        v[0] = problem.initial
        for k, vk in enumerate(starting_values(problem, starter, mesh.levels,
                                               start, config), start=1):
            v[k] = vk
        for k in range(start):
            f[k] = problem.rhs(float(mesh.levels[k]), v[k])
        values[tag], fvals[tag], meta[tag] = v, f, starter
    return values, fvals, meta


def _integrate_pure(problem, mesh, chain, values, fvals, config,
                    correction_scale, noise):
    for n in range(2, mesh.count + 1):
        advance_level(chain, values, fvals, mesh, n, problem, config,
                      correction_scale, noise)


def _integrate_fast(problem, mesh, chain, values, fvals, config,
                    correction_scale, noise):
    stages = chain.stages
    S, N, d = len(stages), mesh.count, problem.dimension
    vtab = np.empty((S, N + 1, d))
    ftab = np.empty((S, N + 1, d))
    for i, tag in enumerate(stages):
        vtab[i] = values[tag]
        ftab[i] = fvals[tag]
    codes = np.array([_STAGE_CODE[t] for t in stages], dtype=np.int32)
    starts = np.array([chain.start_level(t) for t in stages], dtype=np.int32)
    sources = np.array(
        [stages.index(STAGE_TABLE[t][1]) if STAGE_TABLE[t][1] else -1
         for t in stages],
        dtype=np.int32,
    )
    ntab = np.zeros((S, N + 1, d))
    has_noise = 0
    if noise is not None:
        for i, tag in enumerate(stages):
            if tag in noise:
                ntab[i] = noise[tag]
                has_noise = 1
    use_newton = 1 if config.resolve(problem.jacobian is not None) == "newton" else 0
    params = np.asarray(problem.fast_params, dtype=np.float64)
    _fastloop.run_cascade(
        _FAST_KIND[problem.fast_tag], params,
        mesh.levels, mesh.steps, mesh.ratios,
        codes, starts, sources, vtab, ftab,
        use_newton, config.tol,
        config.max_iter_fixed_point, config.max_iter_newton,
        float(correction_scale), ntab, has_noise,
    )
    for i, tag in enumerate(stages):
        values[tag] = vtab[i]
        fvals[tag] = ftab[i]


def _pick_engine(engine: str, problem: OdeProblem) -> str:
    if engine not in ("auto", "pure", "compiled"):
        raise ParameterError("engine must be auto|pure|compiled")
    if engine == "pure":
        return "pure"
    available = _fastloop is not None and problem.fast_tag in _FAST_KIND
    if engine == "compiled":
        if not available:
            raise ParameterError(
                "compiled engine requested but unavailable for this problem"
            )
        return "compiled"
    # BDF2DC_PURE only steers the automatic choice; explicit requests win
    if os.environ.get("BDF2DC_PURE"):
        return "pure"
    return "compiled" if available else "pure"


def integrate(problem: OdeProblem, mesh: Mesh, chain: Union[str, SchemeChain],
              starters=None, config: SolverConfig = SolverConfig(),
              correction_scale: float = 1.0, noise: Optional[dict] = None,
              engine: str = "auto") -> dict:
    """Integrate the cascade over a fixed mesh.

    Parameters
    ----------
    starters : a starter name, comma list, or sequence, one per stage
        (a single name is applied to every stage).
    correction_scale : multiplies every correction term; 0 reduces all
        stages to the base scheme (diagnostic hook).
    noise : optional dict stage-tag -> (N+1, d) array added to each stage's
        equation right-hand side (perturbation experiments).
    engine : "auto" | "pure" | "compiled".

    Returns
    -------
    dict mapping stage tag to :class:`StageHistory`.
    """
    chain = _resolve_chain(chain)
    starter_names = _resolve_starters(chain, starters)
    values, fvals, meta = _prepare_arrays(problem, mesh, chain, starter_names,
                                          config)
    picked = _pick_engine(engine, problem)
    if picked == "compiled":
        _integrate_fast(problem, mesh, chain, values, fvals, config,
                        correction_scale, noise)
    else:
        _integrate_pure(problem, mesh, chain, values, fvals, config,
                        correction_scale, noise)
    return {
        tag: StageHistory(tag, values[tag], fvals[tag], meta[tag])
        for tag in chain.stages
    }


def exact_trajectory(problem: OdeProblem, mesh: Mesh) -> np.ndarray:
    """Exact solution sampled at every mesh level, shape (N+1, d)."""
    return np.stack([problem.exact_at(float(t)) for t in mesh.levels])


def max_error(history: StageHistory, exact_values: np.ndarray) -> float:
    """max over levels 1..N of the max-abs componentwise error."""
    return float(history.errors_against(exact_values)[1:].max())


def final_error(history: StageHistory, exact_values: np.ndarray) -> float:
    """Max-abs componentwise error at the final level.

    This is the error functional the reference convergence tables record
    (their printed values match the final-level error, not the max over
    levels), so the benchmark studies report it as e(N).
    """
    return float(np.max(np.abs(history.values[-1] - exact_values[-1])))


def write_trajectory_csv(fh, mesh: Mesh, histories: dict,
                         problem: Optional[OdeProblem] = None) -> None:
    """Dump trajectories as CSV: level, time, stage values, pointwise errors."""
    tags = list(histories)
    d = next(iter(histories.values())).values.shape[1]
    comp = lambda tag, j: tag if d == 1 else f"{tag}_{j}"
    header = ["k", "t_k"]
    header += [comp(tag, j) for tag in tags for j in range(d)]
    exact = None
    if problem is not None and problem.exact is not None:
        exact = exact_trajectory(problem, mesh)
        header += [f"err_{tag}" for tag in tags]
    fh.write(",".join(header) + "\n")
    for k in range(mesh.count + 1):
        row = [str(k), repr(float(mesh.levels[k]))]
        for tag in tags:
            row += [repr(float(x)) for x in histories[tag].values[k]]
        if exact is not None:
            for tag in tags:
                err = np.max(np.abs(histories[tag].values[k] - exact[k]))
                row.append(repr(float(err)))
        fh.write(",".join(row) + "\n")
