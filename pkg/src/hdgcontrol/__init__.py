"""HDG discretization of Dirichlet boundary control for convection-diffusion.

The optimality system (state, adjoint, and the boundary gradient condition)
is solved in one linear solve, either monolithically or after static
condensation to the edge traces and the control.
"""

from .analysis import (
    ConvergenceReport, compare_to_reference, convergence_rates, export_boundary_vtk,
    export_field_vtk, l2_error_boundary, l2_error_domain, triple_norm,
)
from .assembly import (
    DofLayout, GlobalSystem, LocalBlocks, assemble_form_matrix, assemble_global, local_B1,
    local_B2, local_rhs, maxnorm_beta_n, stabilization,
)
from .basis import (
    EdgeBasis, QuadratureRule, SimplexBasis, edge_quadrature, project_edge, project_element,
    triangle_quadrature,
)
from .config import RunConfig, parse_config
from .errors import (
    AssumptionViolation, ConfigurationError, HDGControlError, SingularMatrixError, SolverError,
)
from .experiments import emit_csv, run_nonsmooth_experiment, run_smooth_experiment
from .mesh import Mesh, build_uniform_mesh, edge_geometry, mesh_statistics
from .problem import ProblemData, nonsmooth_problem, smooth_problem
from .solver import (
    Solution, optimality_residual, solve_adjoint, solve_optimal_control, solve_state,
    static_condense,
)
from .sparse import factor_solve, finalize, residual_norm

__version__ = "0.1.0"
