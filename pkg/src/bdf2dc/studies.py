"""Benchmark studies: convergence tables, starting-effect matrices,
perturbation probes, kernel diagnostics and the adaptive-stepping demo.

Every study returns a small result object that renders to CSV (machine,
deterministic given spec and seed: wall-clock columns are excluded) or to
aligned markdown (human, includes timings).

Two error functionals appear in the reference experiments and both are
supported: ``final`` is the max-abs error at the last level, ``max`` the
max over all levels.  The graded/random/geometric convergence tables are
reproduced by ``final``; the uniform starting-effect matrix and the
derivative study by ``max``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_integrate
from .doc_kernels import (
    doc_explicit,
    kernel_sum_expected,
    orthogonality_residual,
    sigma_factors,
)
from .engine import exact_trajectory, final_error, integrate, max_error
from .errors import Bdf2DcError, ParameterError
from .implicit import SolverConfig
from .mesh import make_mesh, uniform_mesh
from .problems import by_name
from .schemes import chain_from_name
from .starters import STARTER_ORDER

DEFAULT_HORIZONS = {"example1": 10.0 * np.pi, "example2": 5.0, "example3": 100.0}

#: maximum attainable order of each stage, before starter limitations
STAGE_MAX_ORDER = {"bdf2": 2, "dc3": 3, "dc34": 4, "dc4p": 4}

#: how many orders a stage adds on top of the stage it corrects
STAGE_ORDER_JUMP = {"dc3": 1, "dc34": 1, "dc4p": 2}


def _error_fn(metric: str):
    if metric == "final":
        return final_error
    if metric == "max":
        return max_error
    raise ParameterError(f"unknown error metric {metric!r}; expected final|max")


@dataclass(frozen=True)
class StudySpec:
    """What to integrate and how to measure it."""

    problem: str = "example1"
    mesh: str = "graded"
    gamma: float = 2.0
    seed: int = 1
    ratio: float = 3.0
    T: Optional[float] = None
    n_values: Sequence[int] = (5120, 10240, 20480)
    chain: str = "dc34"
    starters: Sequence[str] | str = "exact"
    solver: SolverConfig = SolverConfig()
    metric: str = "final"
    v0: float = 0.5
    engine: str = "auto"

    @property
    def horizon(self) -> float:
        return DEFAULT_HORIZONS[self.problem] if self.T is None else float(self.T)

    def make_problem(self):
        if self.problem == "example3":
            return by_name(self.problem, v0=self.v0)
        return by_name(self.problem)

    def make_mesh(self, N: int):
        return make_mesh(self.mesh, self.horizon, N, gamma=self.gamma,
                         seed=self.seed, ratio=self.ratio)

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ParameterError("the N sequence must be strictly increasing")
        object.__setattr__(self, "n_values", ns)
        _error_fn(self.metric)
        chain_from_name(self.chain)


@dataclass
class ConvergenceRow:
    N: int
    tau_max: float
    errors: dict
    orders: dict
    seconds: float
    failure: Optional[str] = None


@dataclass
class ConvergenceTable:
    spec: StudySpec
    stages: tuple
    rows: list

    @property
    def any_failures(self) -> bool:
        return any(r.failure for r in self.rows)

    def write_csv(self, fh) -> None:
        cols = ["N", "tau_max"]
        for tag in self.stages:
            cols += [f"e_{tag}", f"order_{tag}"]
        cols.append("failure")
        fh.write(",".join(cols) + "\n")
        for r in self.rows:
            cells = [str(r.N), f"{r.tau_max:.12e}"]
            for tag in self.stages:
                e = r.errors.get(tag)
                o = r.orders.get(tag)
                cells.append("" if e is None else f"{e:.12e}")
                cells.append("" if o is None else _fmt_order(o, 4))
            cells.append(r.failure or "")
            fh.write(",".join(cells) + "\n")

    def write_markdown(self, fh) -> None:
        header = ["N", "tau"]
        for tag in self.stages:
            header += [f"e({tag})", "order"]
        header.append("time [s]")
        table = [header]
        for r in self.rows:
            cells = [str(r.N), f"{r.tau_max:.3e}"]
            for tag in self.stages:
                e, o = r.errors.get(tag), r.orders.get(tag)
                cells.append("failed" if r.failure and e is None else
                             "" if e is None else f"{e:.2e}")
                cells.append("-" if o is None else _fmt_order(o))
            cells.append(f"{r.seconds:.2f}")
            table.append(cells)
        _write_md_table(fh, table,
                        title=f"{self.spec.problem} / {self.spec.mesh} mesh / "
                              f"chain {self.spec.chain} ({self.spec.metric} error)")


def _fmt_order(o, digits=2) -> str:
    rounded = round(o, digits) + 0.0  # avoid "-0.00" from tiny log ratios
    return f"{rounded:.{digits}f}"


def _write_md_table(fh, rows, title=None) -> None:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    if title:
        fh.write(f"### {title}\n\n")
    for k, row in enumerate(rows):
        fh.write("| " + " | ".join(str(c).rjust(w) for c, w in zip(row, widths)) + " |\n")
        if k == 0:
            fh.write("|" + "|".join("-" * (w + 2) for w in widths) + "|\n")
    fh.write("\n")


def _orders_between(rows, stages) -> None:
    for prev, cur in zip(rows, rows[1:]):
        if prev.failure or cur.failure:
            continue
        # refinement measure: recorded max steps; when those coincide (the
        # geometric family keeps tau_max constant) fall back to the level
        # counts so a flat error column reads as order zero
        denom = np.log(prev.tau_max / cur.tau_max)
        if abs(denom) < 1e-12:
            denom = np.log(cur.N / prev.N)
        for tag in stages:
            e0, e1 = prev.errors.get(tag), cur.errors.get(tag)
            if e0 and e1 and e0 > 0 and e1 > 0:
                cur.orders[tag] = float(np.log(e0 / e1) / denom)


def run_convergence_study(spec: StudySpec) -> ConvergenceTable:
    """Errors and observed orders across the spec's N sequence.

    A failed cell (solver divergence) is recorded in its row and the study
    continues with the remaining resolutions.
    """
    problem = spec.make_problem()
    stages = chain_from_name(spec.chain).stages
    err = _error_fn(spec.metric)
    rows = []
    for N in spec.n_values:
        mesh = spec.make_mesh(N)
        t0 = time.perf_counter()
        try:
            hist = integrate(problem, mesh, spec.chain, spec.starters,
                             spec.solver, engine=spec.engine)
            exact = exact_trajectory(problem, mesh)
            errors = {tag: err(hist[tag], exact) for tag in stages}
            failure = None
        except Bdf2DcError as exc:
            errors, failure = {}, str(exc)
        rows.append(ConvergenceRow(N, mesh.tau_max, errors, {},
                                   time.perf_counter() - t0, failure))
    _orders_between(rows, stages)
    return ConvergenceTable(spec, stages, rows)


def expected_orders(chain: str, starters: Sequence[str]) -> dict:
    """Attainable order per stage for a starter assignment.

    Each stage's order is capped by its own scheme order, by one more than
    its starter's order, and by one more than the stage it corrects.
    """
    stages = chain_from_name(chain).stages
    out, prev = {}, None
    for tag, starter in zip(stages, starters):
        order = min(STAGE_MAX_ORDER[tag], STARTER_ORDER[starter] + 1)
        if prev is not None:
            order = min(order, out[prev] + STAGE_ORDER_JUMP[tag])
        out[tag] = int(order)
        prev = tag
    return out


@dataclass
class StartingMatrix:
    problem: str
    n_values: tuple
    tables: list          # (triplet, expected orders, ConvergenceTable)

    @property
    def any_failures(self) -> bool:
        return any(t.any_failures for _, _, t in self.tables)

    def write_csv(self, fh) -> None:
        first = True
        for trip, expected, table in self.tables:
            cols = ["starters", "expected"]
            if first:
                header = ["starters", "expected", "N"]
                for tag in table.stages:
                    header += [f"e_{tag}", f"order_{tag}"]
                fh.write(",".join(header) + "\n")
                first = False
            label = "+".join(trip)
            exp = "/".join(str(expected[t]) for t in table.stages)
            for r in table.rows:
                cells = [label, exp, str(r.N)]
                for tag in table.stages:
                    e, o = r.errors.get(tag), r.orders.get(tag)
                    cells.append("" if e is None else f"{e:.12e}")
                    cells.append("" if o is None else _fmt_order(o, 4))
                fh.write(",".join(cells) + "\n")

    def write_markdown(self, fh) -> None:
        for trip, expected, table in self.tables:
            exp = "/".join(str(expected[t]) for t in table.stages)
            fh.write(f"### starters {'+'.join(trip)} "
                     f"(attainable orders {exp})\n\n")
            header = ["N"]
            for tag in table.stages:
                header += [f"e({tag})", "order"]
            rows = [header]
            for r in table.rows:
                cells = [str(r.N)]
                for tag in table.stages:
                    e, o = r.errors.get(tag), r.orders.get(tag)
                    cells.append("" if e is None else f"{e:.2e}")
                    cells.append("-" if o is None else _fmt_order(o))
                rows.append(cells)
            _write_md_table(fh, rows)


def run_starting_matrix(problem: str, n_values: Sequence[int],
                        triplets: Sequence[Sequence[str]],
                        T: Optional[float] = None,
                        solver: SolverConfig = SolverConfig(),
                        chain: str = "dc34") -> StartingMatrix:
    """Starter-assignment study on uniform meshes.

    Runs the cascade once per (triplet, N) cell and reports per-stage
    max-over-levels errors with observed orders, annotated with the
    attainable orders of the assignment.
    """
    tables = []
    for trip in triplets:
        trip = tuple(trip)
        spec = StudySpec(problem=problem, mesh="uniform", T=T,
                         n_values=tuple(n_values), chain=chain, starters=trip,
                         solver=solver, metric="max")
        tables.append((trip, expected_orders(chain, trip),
                       run_convergence_study(spec)))
    return StartingMatrix(problem, tuple(n_values), tables)


@dataclass(frozen=True)
class PerturbationSpec:
    """Noise injection plan: amplitude sweep, draw seed and bound factor."""

    amplitudes: tuple = (1e-10, 1e-8, 1e-6)
    seed: int = 2024
    bound_factor: float = 1e3

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        if any(a < 0 for a in amps):
            raise ParameterError("noise amplitudes must be nonnegative")
        object.__setattr__(self, "amplitudes", amps)


@dataclass
class PerturbationReport:
    spec: StudySpec
    N: int
    amplitudes: tuple
    seed: int
    rows: list            # dicts: amplitude, deviation per stage, ratio, bounded
    linearity: list       # dicts: amplitude pair, deviation ratio, amp ratio

    @property
    def any_failures(self) -> bool:
        return False

    @property
    def all_bounded(self) -> bool:
        return all(r["bounded"] for r in self.rows)

    def write_csv(self, fh) -> None:
        stages = list(self.rows[0]["deviation"]) if self.rows else []
        fh.write("amplitude," + ",".join(f"dev_{t}" for t in stages)
                 + ",worst_ratio,bounded\n")
        for r in self.rows:
            devs = ",".join(f"{r['deviation'][t]:.12e}" for t in stages)
            fh.write(f"{r['amplitude']:.3e},{devs},{r['ratio']:.6e},"
                     f"{int(r['bounded'])}\n")

    def write_markdown(self, fh) -> None:
        stages = list(self.rows[0]["deviation"]) if self.rows else []
        table = [["amplitude"] + [f"dev({t})" for t in stages]
                 + ["dev/amp", "bounded"]]
        for r in self.rows:
            table.append([f"{r['amplitude']:.1e}"]
                         + [f"{r['deviation'][t]:.2e}" for t in stages]
                         + [f"{r['ratio']:.2f}", "yes" if r["bounded"] else "NO"])
        _write_md_table(fh, table,
                        title=f"perturbation response on {self.spec.mesh} mesh "
                              f"(N={self.N}, seed={self.seed})")
        if self.linearity:
            table = [["amplitudes", "deviation ratio", "amplitude ratio"]]
            for l in self.linearity:
                table.append([l["pair"], f"{l['dev_ratio']:.2f}",
                              f"{l['amp_ratio']:.2f}"])
            _write_md_table(fh, table)


def run_perturbation_probe(spec: StudySpec, N: int,
                           perturb: PerturbationSpec = PerturbationSpec()
                           ) -> PerturbationReport:
    """Bounded-noise stability probe.

    Integrates the cascade once unperturbed and once per amplitude with the
    same unit noise scaled accordingly (injected additively into every
    stage equation), then reports the worst trajectory deviation, its ratio
    to the amplitude, and whether it stays below ``bound_factor`` times the
    amplitude.  Identical starting values are used throughout, so a zero
    amplitude reproduces the nominal trajectory exactly.
    """
    amplitudes, seed = perturb.amplitudes, perturb.seed
    bound_factor = perturb.bound_factor
    problem = spec.make_problem()
    mesh = spec.make_mesh(N)
    stages = chain_from_name(spec.chain).stages
    nominal = integrate(problem, mesh, spec.chain, spec.starters, spec.solver,
                        engine=spec.engine)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    unit = {
        tag: rng.uniform(-1.0, 1.0, size=(mesh.count + 1, problem.dimension))
        for tag in stages
    }
    rows = []
    for amp in amplitudes:
        noise = {tag: float(amp) * unit[tag] for tag in stages}
        pert = integrate(problem, mesh, spec.chain, spec.starters, spec.solver,
                         noise=noise, engine=spec.engine)
        dev = {
            tag: float(np.max(np.abs(pert[tag].values - nominal[tag].values)))
            for tag in stages
        }
        worst = max(dev.values())
        rows.append({
            "amplitude": float(amp),
            "deviation": dev,
            "ratio": worst / float(amp),
            "bounded": worst <= bound_factor * float(amp),
        })
    linearity = []
    for lo, hi in zip(rows, rows[1:]):
        worst_lo = max(lo["deviation"].values())
        worst_hi = max(hi["deviation"].values())
        linearity.append({
            "pair": f"{lo['amplitude']:.0e}->{hi['amplitude']:.0e}",
            "dev_ratio": worst_hi / worst_lo,
            "amp_ratio": hi["amplitude"] / lo["amplitude"],
        })
    return PerturbationReport(spec, N, tuple(float(a) for a in amplitudes),
                              int(seed), rows, linearity)


@dataclass
class DocReport:
    source: str
    rows: list

    any_failures = False

    @property
    def all_ok(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def write_csv(self, fh) -> None:
        fh.write("n,kernel_sum,sum_expected,residual,sigma2,sigma3,sigma4,"
                 "bound2,bound3,bound4,ok\n")
        for r in self.rows:
            fh.write(
                f"{r['n']},{r['kernel_sum']:.12e},{r['sum_expected']:.12e},"
                f"{r['residual']:.3e},{r['sigma2']:.6e},{r['sigma3']:.6e},"
                f"{r['sigma4']:.6e},{r['bound2']:.6e},{r['bound3']:.6e},"
                f"{r['bound4']:.6e},{int(r['ok'])}\n"
            )

    def write_markdown(self, fh) -> None:
        table = [["n", "kernel sum", "residual", "sigma2", "sigma3", "sigma4",
                  "bounds ok"]]
        for r in self.rows:
            table.append([r["n"], f"{r['kernel_sum']:.6f}",
                          f"{r['residual']:.1e}", f"{r['sigma2']:.2e}",
                          f"{r['sigma3']:.2e}", f"{r['sigma4']:.2e}",
                          "yes" if r["ok"] else "NO"])
        _write_md_table(fh, table, title=f"kernel diagnostics ({self.source})")


def run_doc_report(ratios, source: str = "ratios",
                   sample_every: int = 1) -> DocReport:
    """Per-level kernel diagnostics for a ratio sequence r_2..r_n.

    Each row checks the kernel-sum identity, both convolution-inverse
    residuals and the decay factors against their theoretical envelopes.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    sig = sigma_factors(ratios)
    rows = []
    for m in range(2, ratios.size + 2):
        if (m - 2) % sample_every and m != ratios.size + 1:
            continue
        prefix = ratios[: m - 1]
        kernels = doc_explicit(prefix)
        k = m - 2
        row = {
            "n": m,
            "kernel_sum": kernels.total(),
            "sum_expected": kernel_sum_expected(prefix),
            "residual": orthogonality_residual(prefix),
            "sigma2": float(sig.sigma2[k]),
            "sigma3": float(sig.sigma3[k]),
            "sigma4": float(sig.sigma4[k]),
            "bound2": float(sig.bound2[k]),
            "bound3": float(sig.bound3[k]),
            "bound4": float(sig.bound4[k]),
        }
        row["ok"] = bool(
            np.all(kernels.theta > 0.0)
            and row["kernel_sum"] <= 1.0 + 1e-13
            and row["residual"] <= 1e-12
            and row["sigma2"] <= row["bound2"]
            and row["sigma3"] <= row["bound3"]
            and row["sigma4"] <= row["bound4"]
        )
        rows.append(row)
    return DocReport(source, rows)


@dataclass
class AdaptiveDemo:
    config: AdaptiveConfig
    rows: list

    @property
    def any_failures(self) -> bool:
        return any(r.get("failure") for r in self.rows)

    def write_csv(self, fh) -> None:
        fh.write("v0,T,kind,levels,rejects,final_state,final_error,failure\n")
        for r in self.rows:
            fh.write(
                f"{r['v0']},{r['T']},{r['kind']},{r.get('levels', '')},"
                f"{r.get('rejects', '')},{r.get('final_state', '')},"
                f"{r.get('final_error', '')},{r.get('failure', '')}\n"
            )

    def write_markdown(self, fh) -> None:
        table = [["v0", "T", "kind", "levels", "rejects", "final state",
                  "final error", "time [s]"]]
        for r in self.rows:
            table.append([
                r["v0"], r["T"], r["kind"], r.get("levels", "-"),
                r.get("rejects", "-"),
                "-" if "final_state" not in r else f"{r['final_state']:.9f}",
                "-" if "final_error" not in r else f"{r['final_error']:.2e}",
                f"{r['seconds']:.2f}",
            ])
        _write_md_table(fh, table, title="adaptive vs uniform stepping")


def run_adaptive_demo(v0_values: Sequence[float] = (-1.5, -0.5, 0.5, 1.5),
                      horizons: Sequence[float] = (100.0,),
                      config: AdaptiveConfig = AdaptiveConfig(),
                      chain: str = "dc3",
                      starters: Sequence[str] = ("bdf1", "rk2"),
                      solver: SolverConfig = SolverConfig(),
                      include_uniform: bool = True,
                      mesh_out_dir=None) -> AdaptiveDemo:
    """Adaptive-stepping demo on the bistable model.

    For every (v0, T) pair: run the controller, report accepted levels,
    rejections and the final-state error against the closed-form solution;
    optionally run the uniform mesh at the step floor for comparison and
    dump the accepted-mesh artifact.
    """
    rows = []
    for T in horizons:
        for v0 in v0_values:
            problem = by_name("example3", v0=v0)
            exact_T = problem.exact_at(float(T))
            t0 = time.perf_counter()
            try:
                result = adaptive_integrate(problem, chain, config, float(T),
                                            starters, solver)
            except Bdf2DcError as exc:
                rows.append({"v0": v0, "T": T, "kind": "adaptive",
                             "failure": str(exc),
                             "seconds": time.perf_counter() - t0})
                continue
            top = result.histories[chain_from_name(chain).stages[-1]]
            final = float(top.values[-1][0])
            rows.append({
                "v0": v0, "T": T, "kind": "adaptive",
                "levels": result.mesh.count,
                "rejects": int(result.total_rejects),
                "final_state": final,
                "final_error": abs(final - float(exact_T[0])),
                "seconds": time.perf_counter() - t0,
            })
            if mesh_out_dir is not None:
                path = f"{mesh_out_dir}/adaptive_mesh_v0={v0}_T={T}.csv"
                with open(path, "w") as fh:
                    result.write_mesh_csv(fh)
            if include_uniform:
                N = int(round(float(T) / config.tau_min))
                mesh = uniform_mesh(float(T), N)
                t0 = time.perf_counter()
                hist = integrate(problem, mesh, chain, starters, solver)
                top = hist[chain_from_name(chain).stages[-1]]
                final = float(top.values[-1][0])
                rows.append({
                    "v0": v0, "T": T, "kind": "uniform",
                    "levels": N,
                    "rejects": 0,
                    "final_state": final,
                    "final_error": abs(final - float(exact_T[0])),
                    "seconds": time.perf_counter() - t0,
                })
    return AdaptiveDemo(config, rows)
