"""Two-point flux finite volumes for the Poisson and heat problems with error functionals."""

from .errors import *  # noqa: F401,F403
from .mesh import (  # noqa: F401
    AdmissibleMesh,
    MeshQuality,
    build_mesh,
    generate_acute_triangular_grid,
    generate_square_grid,
    quality,
    read_fvca5,
    read_mesh,
    write_mesh,
)
from .space import (  # noqa: F401
    DiscreteField,
    ExactSolutionOracle,
    canonical_interpolant,
    consistent_gradient,
    discrete_norm,
    inflated_gradient,
    mean_normal_gradient,
    normal_derivative,
    oscillation,
)
from .assembly import (  # noqa: F401
    LinearFunctional,
    SteadyProblemData,
    assemble_steady,
    riesz_solve,
    solve,
    solve_steady,
)
from .analysis import (  # noqa: F401
    ErrorReport,
    conformity_error,
    consistent_gradient_error,
    delta,
    h2_rate_study,
    sandwich_check,
)
from .singular import SingularSolution, exact_norms, rhs_cone_means, run_benchmark, upper_incomplete_gamma  # noqa: F401
from .transient import (  # noqa: F401
    CouplingMap,
    SpaceTimeField,
    TimeGrid,
    TransientProblemData,
    delta_time,
    discrete_riesz,
    energy_checks,
    solve_transient,
    zeta_time,
)
