//! Minimum-volume prediction sets for interval-censored outcomes.
//!
//! The outcome `Y` is only observed through a bracket `[Y_lo, Y_hi]`
//! containing it. A kernel estimate of `P([Y_lo, Y_hi] ⊂ C | X = x)` is
//! minimized in volume over unions of intervals at each point of a
//! covariate grid, and the resulting rule is calibrated with split conformal
//! inference so that the latent `Y` is covered with probability `1 - α`.

pub mod error;
pub mod interval;
pub mod data;
pub mod estimator;
pub mod solver;
pub mod rule;
pub mod conformal;
pub mod baseline;
pub mod sim;
mod serde_inf;

pub use data::{Dataset, Observation};
pub use error::{Error, Result};
pub use estimator::{
    bandwidth_rule, containment_prob, default_bandwidth, kernel_value, weights_at, KernelFamily,
    KernelSpec, WeightVector,
};
pub use interval::{contains_bracket, normalize_union, sym_diff_volume, volume, Interval, IntervalUnion};
pub use rule::{linspace_grid, product_grid, Cell, LocalAdjust, Partition, PredictionRule, RuleConfig};
pub use solver::{
    auto_psi, brute_force_min_union, fit_prediction_rule, min_interval, min_interval_reference,
    min_union, SolverConfig, WeightedBracket, WeightedBrackets,
};
pub use conformal::{
    calibrate, calibrate_local, conformal_threshold, differential_adjust, inflate,
    local_split_conformal, score, split_conformal, CalibrationResult, DifferentialResult,
};
pub use baseline::{
    conformalize_quantile_rule, fit_pinball, quantile_rule, QuantileFit, QuantileRule, Target,
};
pub use sim::{
    coverage, integrated_volume, run_experiment, ExperimentConfig, ExperimentReport, Method, Model,
    ModelSpec, PsiSpec, SimData,
};
