"""Reachability, phase averaging and contraction tools for phase-periodic differential inclusions."""

from .contraction import (
    Alpha,
    CertificateReport,
    FinslerCandidate,
    FinslerStructure,
    certify_contraction,
    certify_funnel,
    contingent_cone_test,
    finsler_distance,
    finsler_hausdorff,
    graph_incremental_distance,
    lie_derivative_sup,
    verify_incremental_decay,
)
from .funnels import Funnel, funnel_from_rf
from .hybrid import (
    HybridArc,
    HybridSystem,
    differential_u,
    feedback_linearizing_u,
    funnel_jump_consistency,
    path_integral_u,
    simulate_hybrid,
)
from .inclusion import (
    AveragedField,
    PhaseVelocity,
    SetValuedField,
    average,
    averaging_bound_constant,
    estimate_lipschitz,
)
from .reach import (
    RfSolution,
    graph_distance,
    periodic_funnel,
    poincare_map,
    propagate_phase,
    propagate_time,
    recurrent_times,
    sample_phase_trajectory,
    sample_trajectory,
)
from .sets import CompactSet, DirectionGrid, convex_hull, default_grid, hausdorff, minkowski_ball, prune, support
from .systems import available_systems, build_system
from .verify import run_critical_point, run_finite_horizon, run_invariant_set

theorem1_constant = averaging_bound_constant

__version__ = "0.1.0"
