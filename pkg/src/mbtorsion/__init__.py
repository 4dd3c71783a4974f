"""Torsion function, principal eigenvalue and heat kernels for the Laplacian
with Neumann outer boundary and a small Dirichlet obstacle."""

from .capacity import (
    CapacityResult,
    capacity_ball,
    capacity_ellipsoid_asymptotic,
    capacity_variational,
    descent_check,
    equilibrium_potential_ball,
    rayleigh_trial_bound,
)
from .experiments import SweepConfig, SweepRow, fit_rate, run_sweep, verify_lemma1, verify_prop1, verify_theorem1
from .geometry import DomainSpec, ObstacleSpec, geometry_constants, measure, parse_shape, scale_obstacle
from .heatkernel import HeatKernel, PHPConstants, fit_php_constants, kernel_eval, php_deficit
from .mesh import Mesh, build_mesh
from .operators import SparseOperator, assemble
from .radial_oracle import RadialConfig, ball_neumann_mode, radial_eigen
from .solvers import EigenDecomposition, neumann_spectrum, smallest_eigenpair, solve_torsion

__version__ = "0.1.0"

__all__ = [
    "assemble",
    "ball_neumann_mode",
    "build_mesh",
    "capacity_ball",
    "capacity_ellipsoid_asymptotic",
    "capacity_variational",
    "CapacityResult",
    "descent_check",
    "DomainSpec",
    "EigenDecomposition",
    "equilibrium_potential_ball",
    "fit_php_constants",
    "fit_rate",
    "geometry_constants",
    "HeatKernel",
    "kernel_eval",
    "measure",
    "Mesh",
    "neumann_spectrum",
    "ObstacleSpec",
    "parse_shape",
    "php_deficit",
    "PHPConstants",
    "radial_eigen",
    "RadialConfig",
    "rayleigh_trial_bound",
    "run_sweep",
    "scale_obstacle",
    "smallest_eigenpair",
    "solve_torsion",
    "SparseOperator",
    "SweepConfig",
    "SweepRow",
    "verify_lemma1",
    "verify_prop1",
    "verify_theorem1",
]
