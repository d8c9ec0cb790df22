//! Statistical verification: tail fits, growth checks, speeds and shapes,
//! and the exact DOP oracle.

pub mod dop_exact;
pub mod shape;
pub mod stats;
pub mod tail;

pub use dop_exact::{compare_with_engine, dop_exact, OracleComparison};
pub use shape::{
    check_inclusion, default_directions, estimate_speed, hausdorff, hit_samples, shape_snapshot, InclusionReport,
    ShapeEstimate, Snapshot, SpeedEstimate,
};
pub use stats::{chi_square_gof, ks_one_sample, ks_two_sample, mean_se, ols, pearson, wilson, wls, LinearFit, TestResult, Z95};
pub use tail::{
    check_aml, check_all, count_tail, fit_probability_decay, fit_tail, fit_tail_from, smallest_clean, CountTail,
    GrowthCheck, ProbabilityDecay, TailFamily, TailFit,
};
