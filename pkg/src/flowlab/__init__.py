"""flowlab: a desk-scale finite-element laboratory for time-dependent
incompressible flow in 2D.

Classical inf-sup stable pairs (Taylor-Hood, optionally grad-div
stabilised) and exactly divergence-free pairs (Scott-Vogelius on
barycentre-split meshes, H(div)-conforming BDM-DG with upwinding) share
one mesh/assembly/time-integration stack, plus the diagnostics used to
compare them: pressure-robustness contrasts, energy budgets, Gronwall
functionals, and convergence-rate studies.
"""

from .mesh import (
    Mesh,
    MeshStats,
    alfeld_split,
    load_mesh,
    make_periodic,
    save_mesh,
    uniform_refine,
    unit_square_mesh,
)
from .refelem import CellMap, QuadRule, RefBasis, map_basis, quadrature_rule, ref_basis
from .space import (
    CoefficientVector,
    FESpace,
    MethodConfig,
    build_space,
    evaluate,
    interpolate,
    method_spaces,
)
from .assembly import (
    ConvectionOperator,
    OperatorSet,
    assemble_convection,
    assemble_divergence,
    assemble_forcing,
    assemble_mass,
    assemble_viscous,
    build_operators,
    upwind_seminorm_sq,
)
from .timeloop import (
    FlowState,
    SaddleFactorization,
    TimeSeries,
    bootstrap_step,
    factorize,
    run_transient,
    sbdf2_step,
    solve_stokes,
)
from .analysis import (
    ExactSolution,
    NormReport,
    RateTable,
    compute_norms,
    convergence_rates,
    energy_budget,
    gradient_forcing,
    gronwall_functional,
    lattice_flow,
    measure_coercivity,
    potential_flow,
    stokes_projection,
)

__version__ = "0.1.0"
