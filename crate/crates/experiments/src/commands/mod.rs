mod certify;
mod run;
mod snapshot;
mod stability;
mod tubes;

pub use certify::{
    audit, certify, certify_geometry, CertifyReport, CertifySummary, GeometryRow, PairRow,
};
pub use run::{
    matched_static_agent, run, run_one, summarize, ChatterSummary, ComparisonRow,
    ComparisonSummary, Mode, RunReport, RunSummary,
};
pub use snapshot::{gen_path, SnapshotReport, SnapshotRow};
pub use stability::{
    proxy_bound, rm_constant, scheduler_stability, sweep as stability_sweep, variation_allowance,
    StabilityCell, StabilityReport, StabilityRow, StabilitySummary,
};
pub use tubes::{
    summarize as summarize_tubes, sweep as tube_sweep, tubes, TubeRow, TubesReport, TubesSummary,
};
