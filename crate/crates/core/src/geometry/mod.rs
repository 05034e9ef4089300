//! Path length, curvature, kink penalty, speed and curvature densities,
//! fixed-point derivatives, the path-integral value bound, feasible tubes,
//! gap-safe regions, and multi-parameter ellipsoids and cones.

mod analysis;
mod density;
mod kinks;
mod param;
mod tubes;

pub use analysis::{
    GeometryConfig, GeometrySummary, GridPoint, PathGeometry, ResolvedConstants, ValueBound,
};
pub use density::{
    curvature, curvature_density, curvature_density_from, path_length, q_path_derivative,
    q_path_second_derivative, speed_density, speed_density_from, trapezoid, uniform_grid,
    QDerivative, DEFAULT_C2,
};
pub use kinks::{
    detect_kinks, gap_profile, kink_penalty, GapProfile, KinkPenalty, KinkRecord, KinkScan,
};
pub use param::{
    ellipsoid_contains, feasible_cone, jacobian_vector_product, param_geometry, pullback_metric,
    ConeDecision, Constraint, FnConstraint, ParamFamily, ParamGeometry, PathParamFamily,
    RingParamFamily,
};
pub use tubes::{SafeRegion, TubeCoverage, TubeOrder, TubeResult};
