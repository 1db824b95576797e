//! Simulation designs and the coverage / volume evaluation protocol.
//!
//! Models A and B draw the latent outcome from a two-component normal
//! mixture whose modes separate as `x` grows; Model C adds right-skewed
//! chi-square noise to a cubic mean. Model A observes brackets widened by
//! half-normal noise; Models B and C observe 20% of outcomes as unit floor
//! brackets and the rest exactly. Example 1 has no covariate and brackets
//! `(0, 1)` or `(0, 2)`.

mod eval;
mod experiment;
mod models;

pub use eval::{coverage, coverage_on, eval_points, integrated_volume, CellCoverage, CoverageStats};
pub use experiment::{
    run_experiment, run_single, ExperimentConfig, ExperimentReport, Method, MethodSummary,
    PsiSpec, RepRecord, RepSeeds,
};
pub use models::{
    gen_example1, gen_model_a, gen_model_b, gen_model_c, generate, generate_spec, mean_fn,
    split_fn, variance_fn, Model, ModelSpec, SimData, X_RANGE,
};
