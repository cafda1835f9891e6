"""conekit: numerical conical Kahler geometry on marked spheres.

Modules
-------
cone_geometry      cone charts, W-map, weighted Holder norms, model metrics
elliptic           cone Laplacian, K-bi-Laplacian, Lichnerowicz, Fredholm solves
parabolic_bundles  parabolic structures, slopes, stability verdicts
he_flow            Hermitian-Einstein heat flow and its diagnostics
ruled              projectivised bundle: adiabatic metrics and expansions
invariants         average scalar curvature, holomorphy potentials, log-Futaki
cli                command line front end
"""

from .cone_geometry import (
    ConeSurface,
    ConeMetricField,
    NormReport,
    build_metric,
    check_angle_condition,
    flat_cone_tensors,
    holder_norm,
    w_map,
    w_map_inverse,
)
from .elliptic import (
    DiscreteOperator,
    SolveReport,
    assemble_laplace,
    assemble_lichnerowicz,
    continuity_path_apply,
    fredholm_solve,
    poincare_constant,
    solve_k_bilaplacian,
    solve_laplace,
)
from .parabolic_bundles import (
    LineSub,
    ParabolicBundle,
    QQi,
    StabilityVerdict,
    induced_structure,
    model_bundle_metric,
    parabolic_degree,
    parabolic_slope,
    stability_check,
)
from .he_flow import (
    FlowReport,
    HermitianField,
    analytic_degree,
    build_model_metric,
    curvature_contraction,
    donaldson_distance,
    donaldson_functional,
    flow_run,
    model_metric_fn,
)
from .invariants import (
    KahlerClassData,
    average_scalar,
    holomorphy_potential,
    log_futaki,
)
from .ruled import (
    AdiabaticMetric,
    RuledPoint,
    DA1_apply,
    approx_cscK_step,
    endo_eigen_dictionary,
    endo_from_fiber_function,
    expansion_terms,
    fubini_study_lift,
    scalar_curvature_at,
    vertical_operator,
)

__version__ = "0.1.0"
