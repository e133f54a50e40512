"""Gradient-descent consensus flows on matrix manifolds.

Simulation of intrinsic and extrinsic consensus dynamics for agents on
spheres, Stiefel manifolds, orthogonal groups, and flat tori, plus
construction and stability probing of non-consensus equilibria and
Monte Carlo estimation of the consensus basin.
"""

from .equilibria import (
    ClosedGeodesicSpec,
    EqpSolution,
    StabilityReport,
    build_S_configuration,
    solve_eqp,
    stability_probe,
)
from .errors import (
    CapabilityError,
    ConfigError,
    FeasibilityError,
    GradsyncError,
    InjectivityError,
    IntegrationError,
    KindMismatchError,
    NumericalBlowupError,
    PreconditionError,
    ShapeError,
)
from .flows import (
    Configuration,
    FlowKind,
    compare_square_flows,
    disagreement_U,
    disagreement_V,
    gradient_residual,
    kuramoto_reduction_check,
    matching_energy,
    require_compatible,
    rhs,
    twisted_state,
)
from .graphs import WeightedGraph, circulant, complete, cycle, from_edge_list, from_file
from .integrate import (
    IntegratorSettings,
    Outcome,
    TrajectoryRecord,
    check_consensus,
    integrate,
    max_edge_chord,
    trajectory_header,
    write_summary_json,
    write_trajectory_csv,
)
from .kernels import BACKEND, available_backends
from .manifolds import (
    ManifoldKind,
    ManifoldPoint,
    TangentVector,
    chordal_distance,
    exp_map,
    geodesic_distance,
    injectivity_radius,
    log_map,
    project,
    retract,
    sample_uniform,
)
from .montecarlo import (
    BasinEstimate,
    BasinExperiment,
    format_table1,
    obstructed_cell,
    obstruction_demo,
    run_basin,
    sample_initial,
    table1,
    table1_csv,
    trial_rng,
    wilson_halfwidth,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BasinEstimate",
    "BasinExperiment",
    "CapabilityError",
    "ClosedGeodesicSpec",
    "ConfigError",
    "Configuration",
    "EqpSolution",
    "FeasibilityError",
    "FlowKind",
    "GradsyncError",
    "InjectivityError",
    "IntegrationError",
    "IntegratorSettings",
    "KindMismatchError",
    "ManifoldKind",
    "ManifoldPoint",
    "NumericalBlowupError",
    "Outcome",
    "PreconditionError",
    "ShapeError",
    "StabilityReport",
    "TangentVector",
    "TrajectoryRecord",
    "WeightedGraph",
    "available_backends",
    "build_S_configuration",
    "check_consensus",
    "chordal_distance",
    "circulant",
    "compare_square_flows",
    "complete",
    "cycle",
    "disagreement_U",
    "disagreement_V",
    "exp_map",
    "format_table1",
    "from_edge_list",
    "from_file",
    "geodesic_distance",
    "gradient_residual",
    "injectivity_radius",
    "integrate",
    "kuramoto_reduction_check",
    "log_map",
    "matching_energy",
    "max_edge_chord",
    "obstructed_cell",
    "obstruction_demo",
    "project",
    "require_compatible",
    "retract",
    "rhs",
    "run_basin",
    "sample_initial",
    "sample_uniform",
    "solve_eqp",
    "stability_probe",
    "table1",
    "table1_csv",
    "trajectory_header",
    "trial_rng",
    "twisted_state",
    "wilson_halfwidth",
    "write_summary_json",
    "write_trajectory_csv",
]
