"""Boundary layers of radial semilinear Neumann problems on large balls.

Modules:
    coefficients  problem data and assumption checks
    bvp           graded-mesh solver and uniform-mesh reference solver
    asymptotics   closed-form layer constants and boundary expansions
    verification  sweeps comparing the two
    cli           command-line front end
"""

from .asymptotics import (
    BoundaryPrediction,
    LayerConstants,
    RegimeReport,
    classify_regime,
    compute_constants,
    curvature_term,
    predict_boundary,
    solve_p0,
)
from .bvp import (
    Mesh,
    SolutionProfile,
    SolverConfig,
    bump,
    evaluate,
    first_integral_residuals,
    oracle_solve,
    solve,
    stability_form,
)
from .coefficients import (
    BoundaryFlux,
    InstanceFamily,
    ProblemInstance,
    Reaction,
    ScalarField1D,
    validate_assumptions,
)
from .verification import (
    DecayFit,
    SweepSpec,
    VerificationReport,
    compare_corollary_rk1,
    concentration_check,
    fit_interior_decay,
    lem3_functionals,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPrediction",
    "LayerConstants",
    "RegimeReport",
    "classify_regime",
    "compute_constants",
    "curvature_term",
    "predict_boundary",
    "solve_p0",
    "Mesh",
    "SolutionProfile",
    "SolverConfig",
    "bump",
    "evaluate",
    "first_integral_residuals",
    "oracle_solve",
    "solve",
    "stability_form",
    "BoundaryFlux",
    "InstanceFamily",
    "ProblemInstance",
    "Reaction",
    "ScalarField1D",
    "validate_assumptions",
    "DecayFit",
    "SweepSpec",
    "VerificationReport",
    "compare_corollary_rk1",
    "concentration_check",
    "fit_interior_decay",
    "lem3_functionals",
    "sweep",
]
