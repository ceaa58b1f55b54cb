"""Benchmark command line.

Subcommands: ``converge`` (error/order tables over an N sequence),
``starters`` (starting-scheme matrix on uniform meshes), ``perturb``
(bounded-noise stability probe), ``doc-report`` (convolution-kernel
diagnostics) and ``adaptive`` (adaptive vs uniform stepping demo).

All flags can also be given in a plain key-value config file
(``--config``): one ``key = value`` per line, keys matching the long flag
names, ``#`` comments allowed; explicit flags override the file.  Exit
codes: 0 on success, 1 if any study cell failed, 2 on an invalid
specification.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

import numpy as np

from .adaptive import AdaptiveConfig
from .engine import integrate, write_trajectory_csv
from .errors import Bdf2DcError, ParameterError
from .implicit import SolverConfig
from .mesh import make_mesh
from .studies import (
    PerturbationSpec,
    StudySpec,
    run_adaptive_demo,
    run_convergence_study,
    run_doc_report,
    run_perturbation_probe,
    run_starting_matrix,
)

DEFAULT_TRIPLETS = (
    "bdf1,bdf1,rk3", "bdf1,rk2,rk3", "rk2,rk2,rk3",
    "bdf1,bdf1,rk2", "bdf1,rk2,rk2", "rk2,rk2,rk2",
    "bdf1,bdf1,bdf1", "bdf1,rk2,bdf1", "rk2,rk2,bdf1",
)


def _add_common(parser):
    parser.add_argument("--config", help="key=value file mirroring the flags")
    parser.add_argument("--format", choices=("csv", "md"), default="md")
    parser.add_argument("--out", help="output path (default: stdout)")


def _add_mesh_flags(parser):
    parser.add_argument("--mesh", choices=("graded", "random", "geometric", "uniform"),
                        default="graded")
    parser.add_argument("--gamma", type=float, default=2.0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--ratio", type=float, default=3.0)
    parser.add_argument("--T", type=float, default=None,
                        help="horizon (defaults per problem)")


def _add_scheme_flags(parser):
    parser.add_argument("--problem", default="example1",
                        choices=("example1", "example2", "example3"))
    parser.add_argument("--v0", type=float, default=0.5,
                        help="initial value for example3")
    parser.add_argument("--chain", choices=("bdf2", "dc3", "dc34", "dc4p"),
                        default="dc34")
    parser.add_argument("--start", default="exact",
                        help="starter per stage: s1[,s2[,s3]] from "
                             "exact|bdf1|rk2|rk3 (one name applies to all)")
    parser.add_argument("--solver", choices=("auto", "newton", "fixed-point"),
                        default="auto")
    parser.add_argument("--tol", type=float, default=1e-12,
                        help="implicit-solver termination tolerance")
    parser.add_argument("--engine", choices=("auto", "pure", "compiled"),
                        default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdf2dc",
        description="benchmarks for the variable-step deferred-correction "
                    "integrators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="error/order table over an N sequence")
    _add_scheme_flags(p)
    _add_mesh_flags(p)
    p.add_argument("--N", action="append", default=None,
                   help="mesh size; repeat or comma-separate for a sequence")
    p.add_argument("--metric", choices=("final", "max"), default="final")
    p.add_argument("--dump-trajectory",
                   help="also dump the finest-N trajectories as CSV here")
    _add_common(p)

    p = sub.add_parser("starters", help="starting-scheme matrix (uniform mesh)")
    p.add_argument("--problem", default="example1",
                   choices=("example1", "example2", "example3"))
    p.add_argument("--N", action="append", default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--triplet", action="append", default=None,
                   help="starter triplet s1,s2,s3 (repeatable; default: the "
                        "nine reference assignments)")
    p.add_argument("--solver", choices=("auto", "newton", "fixed-point"),
                   default="auto")
    p.add_argument("--tol", type=float, default=1e-12)
    _add_common(p)

    p = sub.add_parser("perturb", help="bounded-noise stability probe")
    _add_scheme_flags(p)
    _add_mesh_flags(p)
    p.add_argument("--N", type=int, default=2048)
    p.add_argument("--amplitude", action="append", default=None,
                   help="noise amplitude (repeatable; default 1e-10,1e-8,1e-6)")
    p.add_argument("--perturb-seed", type=int, default=2024)
    _add_common(p)

    p = sub.add_parser("doc-report", help="convolution-kernel diagnostics")
    p.add_argument("--mesh", choices=("graded", "random", "geometric", "uniform"),
                   default=None, help="take ratios from this mesh family")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ratio", type=float, default=3.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--random-ratios", type=int, default=None,
                   help="use this many random ratios instead of a mesh")
    p.add_argument("--ratio-low", type=float, default=0.01)
    p.add_argument("--ratio-high", type=float, default=100.0)
    p.add_argument("--sample-every", type=int, default=1,
                   help="report every k-th level only")
    _add_common(p)

    p = sub.add_parser("adaptive", help="adaptive vs uniform stepping demo")
    p.add_argument("--v0", action="append", default=None,
                   help="initial value (repeatable; default -1.5,-0.5,0.5,1.5)")
    p.add_argument("--T", action="append", default=None,
                   help="horizon (repeatable; default 100)")
    p.add_argument("--chain", choices=("dc3", "dc34", "dc4p"), default="dc3")
    p.add_argument("--start", default="bdf1,rk2")
    p.add_argument("--estimator", choices=("e23", "e34", "e24p"), default="e23")
    p.add_argument("--safety", type=float, default=1e3)
    p.add_argument("--tol", type=float, default=1e-1,
                   help="step acceptance tolerance")
    p.add_argument("--solver-tol", type=float, default=1e-12)
    p.add_argument("--tau-min", type=float, default=1e-3)
    p.add_argument("--tau-max", type=float, default=1e-1)
    p.add_argument("--t1", type=float, default=None)
    p.add_argument("--max-rejects", type=int, default=20)
    p.add_argument("--without-uniform", action="store_true",
                   help="skip the uniform-mesh comparison rows")
    p.add_argument("--mesh-out", help="directory for accepted-mesh CSV artifacts")
    _add_common(p)

    return parser


def load_config(path: str) -> dict:
    """Plain key-value file: one ``key = value`` per line, # comments."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


#: flags that accumulate values, per subcommand
_LIST_KEYS = {
    "converge": {"N"},
    "starters": {"N", "triplet"},
    "perturb": {"amplitude"},
    "doc-report": set(),
    "adaptive": {"v0", "T"},
}


def _apply_config(args, parser_defaults, argv_keys):
    """Fill args from the config file for flags the user did not pass."""
    if not getattr(args, "config", None):
        return
    conf = load_config(args.config)
    list_keys = _LIST_KEYS[args.command]
    for key, raw in conf.items():
        if key == "config" or not hasattr(args, key):
            raise ParameterError(f"config key {key!r} does not match a flag")
        if key in argv_keys:
            continue  # explicit flag wins
        current = getattr(args, key)
        if key in list_keys:
            setattr(args, key, [v for v in raw.replace(",", " ").split()])
        elif isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)


def _int_list(values, default):
    if not values:
        return default
    out = []
    for v in values:
        out += [int(x) for x in str(v).replace(",", " ").split()]
    return tuple(out)


def _float_list(values, default):
    if not values:
        return default
    out = []
    for v in values:
        out += [float(x) for x in str(v).replace(",", " ").split()]
    return tuple(out)


@contextlib.contextmanager
def _open_out(path):
    if path:
        with open(path, "w") as fh:
            yield fh
    else:
        yield sys.stdout


def _emit(result, args) -> int:
    with _open_out(args.out) as fh:
        if args.format == "csv":
            result.write_csv(fh)
        else:
            result.write_markdown(fh)
    return 1 if result.any_failures else 0


def _cmd_converge(args) -> int:
    spec = StudySpec(
        problem=args.problem, mesh=args.mesh, gamma=args.gamma, seed=args.seed,
        ratio=args.ratio, T=args.T,
        n_values=_int_list(args.N, (5120, 10240, 20480)),
        chain=args.chain, starters=args.start,
        solver=SolverConfig(method=args.solver, tol=args.tol),
        metric=args.metric, v0=args.v0, engine=args.engine,
    )
    table = run_convergence_study(spec)
    code = _emit(table, args)
    if args.dump_trajectory:
        problem = spec.make_problem()
        mesh = spec.make_mesh(spec.n_values[-1])
        hist = integrate(problem, mesh, spec.chain, spec.starters, spec.solver,
                         engine=spec.engine)
        with open(args.dump_trajectory, "w") as fh:
            write_trajectory_csv(fh, mesh, hist, problem)
    return code


def _cmd_starters(args) -> int:
    triplets = [tuple(t.split(",")) for t in (args.triplet or DEFAULT_TRIPLETS)]
    matrix = run_starting_matrix(
        args.problem, _int_list(args.N, (1280, 2560, 5120)), triplets,
        T=args.T, solver=SolverConfig(method=args.solver, tol=args.tol),
    )
    return _emit(matrix, args)


def _cmd_perturb(args) -> int:
    spec = StudySpec(
        problem=args.problem, mesh=args.mesh, gamma=args.gamma, seed=args.seed,
        ratio=args.ratio, T=args.T, n_values=(int(args.N),), chain=args.chain,
        starters=args.start, solver=SolverConfig(method=args.solver, tol=args.tol),
        v0=args.v0, engine=args.engine,
    )
    report = run_perturbation_probe(
        spec, int(args.N),
        PerturbationSpec(
            amplitudes=_float_list(args.amplitude, (1e-10, 1e-8, 1e-6)),
            seed=args.perturb_seed,
        ),
    )
    code = _emit(report, args)
    return code if report.all_bounded else max(code, 1)


def _cmd_doc_report(args) -> int:
    if args.random_ratios:
        rng = np.random.Generator(np.random.Philox(key=int(args.seed)))
        ratios = rng.uniform(args.ratio_low, args.ratio_high,
                             size=int(args.random_ratios))
        source = f"{args.random_ratios} random ratios, seed {args.seed}"
    else:
        family = args.mesh or "graded"
        mesh = make_mesh(family, args.T, int(args.N), gamma=args.gamma,
                         seed=args.seed, ratio=args.ratio)
        ratios = mesh.ratios[2:]
        source = f"{family} mesh, N={args.N}"
    report = run_doc_report(ratios, source, sample_every=max(1, args.sample_every))
    code = _emit(report, args)
    return code if report.all_ok else max(code, 1)


def _cmd_adaptive(args) -> int:
    config = AdaptiveConfig(
        safety=args.safety, tol=args.tol, tau_min=args.tau_min,
        tau_max=args.tau_max, t1=args.t1, estimator=args.estimator,
        max_rejects_per_level=args.max_rejects,
    )
    demo = run_adaptive_demo(
        v0_values=_float_list(args.v0, (-1.5, -0.5, 0.5, 1.5)),
        horizons=_float_list(args.T, (100.0,)),
        config=config, chain=args.chain,
        starters=tuple(args.start.split(",")),
        solver=SolverConfig(tol=args.solver_tol),
        include_uniform=not args.without_uniform,
        mesh_out_dir=args.mesh_out,
    )
    return _emit(demo, args)


_COMMANDS = {
    "converge": _cmd_converge,
    "starters": _cmd_starters,
    "perturb": _cmd_perturb,
    "doc-report": _cmd_doc_report,
    "adaptive": _cmd_adaptive,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    argv_keys = {
        a.lstrip("-").split("=", 1)[0].replace("-", "_")
        for a in argv if a.startswith("--")
    }
    try:
        _apply_config(args, parser, argv_keys)
        return _COMMANDS[args.command](args)
    except (Bdf2DcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
