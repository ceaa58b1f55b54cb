"""Variable-step BDF2 deferred-correction time integration.

A cascade of implicit two-step schemes on arbitrary nonuniform meshes: the
base second-order scheme plus deferred corrections raising the order to
three and four, with convolution-kernel diagnostics, an adaptive step
controller, and a benchmark CLI.
"""

from .adaptive import AdaptiveConfig, AdaptiveResult, adaptive_integrate
from .doc_kernels import (
    DocKernels,
    SigmaFactors,
    doc_explicit,
    doc_recursive,
    orthogonality_residual,
    sigma_factors,
)
from .engine import (
    compiled_engine_available,
    exact_trajectory,
    integrate,
    max_error,
    write_trajectory_csv,
)
from .errors import (
    AdaptiveStepError,
    Bdf2DcError,
    CapabilityError,
    LinearSolveError,
    ParameterError,
    SolverDivergenceError,
    StateError,
)
from .implicit import ImplicitStepSpec, SolverConfig, solve_fixed_point, solve_newton
from .mesh import Mesh, geometric_mesh, graded_mesh, make_mesh, random_mesh, uniform_mesh
from .problems import OdeProblem, by_name, example1, example2, example3
from .schemes import (
    Bdf2Kernels,
    SchemeChain,
    StageHistory,
    bdf2_apply,
    bdf2_kernels,
    chain_from_name,
    dc3_correction,
    dc4_correction,
    divided_difference,
)
from .starters import SDIRK2, SDIRK3, bdf1_step, exact_start, sdirk2_step, sdirk3_step

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "AdaptiveResult",
    "adaptive_integrate",
    "Bdf2DcError",
    "Bdf2Kernels",
    "CapabilityError",
    "DocKernels",
    "ImplicitStepSpec",
    "LinearSolveError",
    "Mesh",
    "OdeProblem",
    "ParameterError",
    "SchemeChain",
    "SigmaFactors",
    "SolverConfig",
    "SolverDivergenceError",
    "StageHistory",
    "StateError",
    "AdaptiveStepError",
    "bdf1_step",
    "bdf2_apply",
    "bdf2_kernels",
    "by_name",
    "chain_from_name",
    "compiled_engine_available",
    "dc3_correction",
    "dc4_correction",
    "divided_difference",
    "doc_explicit",
    "doc_recursive",
    "exact_start",
    "exact_trajectory",
    "example1",
    "example2",
    "example3",
    "geometric_mesh",
    "graded_mesh",
    "integrate",
    "make_mesh",
    "max_error",
    "orthogonality_residual",
    "random_mesh",
    "sdirk2_step",
    "sdirk3_step",
    "SDIRK2",
    "SDIRK3",
    "sigma_factors",
    "solve_fixed_point",
    "solve_newton",
    "uniform_mesh",
    "write_trajectory_csv",
]
