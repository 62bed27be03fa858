"""Quasilinear elliptic forward solvers and coefficient reconstruction.

Solves div(gamma(u) A grad u) = 0 in 1D and on the 2D unit disk via the
Kirchhoff transform, recovers gamma from conormal boundary data with
adjoint-state Tikhonov regularization, and empirically verifies the Holder
stability exponents and the associated variational lower bound.
"""

from .coeffspace import (
    GammaGrid,
    antiderivative,
    eval_gamma,
    h1_seminorm_sq,
    inverse_antiderivative,
    project_positive,
)
from .errors import (
    ConvergenceError,
    DataError,
    InvalidArgumentError,
    PreconditionError,
    QuasilinError,
    RangeError,
)
from .solver1d import Coefficient1D, neumann_exact, solve_forward_exact, solve_forward_fd
from .solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    DiskMesh,
    MatrixField,
    NodalField,
    build_disk_mesh,
    dirichlet_g,
    solve_dirichlet,
    solve_forward_kirchhoff,
    solve_forward_picard,
)
from .adjoint import full_gradient, gradient_1d, gradient_2d, gradient_2d_exact, misfit
from .optimize import OptimConfig, add_noise, l2_error, make_preset, run_reconstruction
from .stability import (
    build_optimality_pair,
    direct_invert_1d,
    holder_sweep,
    minimizer_profile,
    monte_carlo_inequality,
    verify_inequality,
)

__version__ = "1.0.0"

__all__ = [
    "GammaGrid", "antiderivative", "eval_gamma", "h1_seminorm_sq",
    "inverse_antiderivative", "project_positive",
    "QuasilinError", "InvalidArgumentError", "RangeError", "PreconditionError",
    "DataError", "ConvergenceError",
    "Coefficient1D", "solve_forward_exact", "solve_forward_fd", "neumann_exact",
    "DiskMesh", "MatrixField", "NodalField", "BoundaryTrace",
    "DirichletWorkspace", "build_disk_mesh", "dirichlet_g", "solve_dirichlet",
    "solve_forward_kirchhoff", "solve_forward_picard",
    "misfit", "gradient_1d", "gradient_2d", "gradient_2d_exact", "full_gradient",
    "OptimConfig", "add_noise", "l2_error", "make_preset", "run_reconstruction",
    "direct_invert_1d", "build_optimality_pair", "holder_sweep",
    "minimizer_profile", "verify_inequality", "monte_carlo_inequality",
    "__version__",
]
