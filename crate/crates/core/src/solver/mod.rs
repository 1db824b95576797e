//! Minimum-volume prediction sets from weighted brackets.
//!
//! Given weights `w_i` on brackets `[lo_i, hi_i]`, find the union of at most
//! `M` closed intervals of least total length whose contained weight
//! `Σ w_i 1{[lo_i, hi_i] ⊂ C}` reaches `τ = 1 - α - ψ`. Only observed lower
//! endpoints can start a component and only observed upper endpoints can end
//! one, so the search is over a finite candidate set.
//!
//! * [`min_interval`]: single interval, `O(n log n)` sweep.
//! * [`min_union`]: dynamic program over Pareto frontiers of
//!   (covered weight, length) pairs.
//! * [`brute_force_min_union`]: exhaustive search for small instances, used
//!   as a test oracle.

mod brute;
mod single;
mod union;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{weights_at, KernelSpec};
use crate::interval::IntervalUnion;
use crate::rule::{PredictionRule, RuleConfig};

pub use brute::{brute_force_min_union, BRUTE_FORCE_ENDPOINT_LIMIT};
pub use single::{min_interval, min_interval_reference};
pub use union::min_union;

/// Slack on the coverage constraint: a set is feasible when its weight is at
/// least `τ - FEASIBILITY_TOL`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Component weights at or below this are treated as zero.
pub(crate) const ZERO_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub psi: f64,
    pub max_components: usize,
    /// Bucket width used to thin the weight axis of the Pareto frontiers.
    pub weight_grid: f64,
    /// Each component must itself contain at least this much weight.
    #[serde(default)]
    pub min_component_weight: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            psi: 0.0,
            max_components: 2,
            weight_grid: 1e-4,
            min_component_weight: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn new(alpha: f64, psi: f64, max_components: usize) -> Result<Self> {
        let cfg = Self {
            alpha,
            psi,
            max_components,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `τ = 1 - α - ψ`.
    pub fn threshold(&self) -> f64 {
        1.0 - self.alpha - self.psi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.psi >= 0.0) || !self.psi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "psi must be finite and nonnegative, got {}",
                self.psi
            )));
        }
        if !(self.threshold() > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha + psi must be below 1, got {} + {}",
                self.alpha, self.psi
            )));
        }
        if self.max_components == 0 {
            return Err(Error::InvalidConfig("max_components must be at least 1".into()));
        }
        if !(self.weight_grid > 0.0) || !self.weight_grid.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weight_grid must be positive, got {}",
                self.weight_grid
            )));
        }
        if !(self.min_component_weight >= 0.0) || self.min_component_weight > self.threshold() {
            return Err(Error::InvalidConfig(format!(
                "min_component_weight must lie in [0, tau], got {}",
                self.min_component_weight
            )));
        }
        Ok(())
    }
}

/// `ψ_n = c · sqrt(log n / (n ∏ h_j))`, the default slack with `c = 0.5`.
pub fn auto_psi(n: usize, spec: &KernelSpec) -> f64 {
    auto_psi_scaled(n, spec, 0.5)
}

pub fn auto_psi_scaled(n: usize, spec: &KernelSpec, c: f64) -> f64 {
    let n = n as f64;
    c * (n.ln() / (n * spec.bandwidth_volume())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBracket {
    pub lo: f64,
    pub hi: f64,
    pub w: f64,
}

/// Brackets with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBrackets {
    entries: Vec<WeightedBracket>,
}

impl WeightedBrackets {
    /// Validate and rescale the weights to sum to one.
    pub fn new(entries: Vec<WeightedBracket>) -> Result<Self> {
        for e in &entries {
            if !(e.lo <= e.hi) || !e.lo.is_finite() || !e.hi.is_finite() {
                return Err(Error::MalformedInterval { lo: e.lo, hi: e.hi });
            }
            if !(e.w >= 0.0) || !e.w.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "bracket weight must be finite and nonnegative, got {}",
                    e.w
                )));
            }
        }
        let total: f64 = entries.iter().map(|e| e.w).sum();
        if !(total > 0.0) {
            return Err(Error::EmptyInput);
        }
        let entries = entries
            .into_iter()
            .filter(|e| e.w > 0.0)
            .map(|e| WeightedBracket { w: e.w / total, ..e })
            .collect();
        Ok(Self { entries })
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(lo, hi, w)| WeightedBracket { lo, hi, w })
                .collect(),
        )
    }

    /// Brackets of `data` with the given per-observation weights.
    pub fn from_weights(data: &Dataset, weights: &[f64]) -> Result<Self> {
        if weights.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: weights.len(),
            });
        }
        Self::new(
            data.iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(o, &w)| WeightedBracket {
                    lo: o.y_lo,
                    hi: o.y_hi,
                    w,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[WeightedBracket] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total weight of brackets contained in `c`.
    pub fn coverage(&self, c: &IntervalUnion) -> f64 {
        self.entries
            .iter()
            .filter(|e| c.contains_bracket(e.lo, e.hi))
            .map(|e| e.w)
            .sum()
    }
}

/// Lexicographic order on component lists, comparing `(lo, hi)` pairs left
/// to right; a strict prefix sorts first.
pub(crate) fn lex_less(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x.0 != y.0 {
            return x.0 < y.0;
        }
        if x.1 != y.1 {
            return x.1 < y.1;
        }
    }
    a.len() < b.len()
}

/// Solve the set problem at every grid point.
///
/// Grid points where no training observation has positive kernel weight are
/// marked undefined and carry an empty set.
pub fn fit_prediction_rule(
    data: &Dataset,
    grid: &[Vec<f64>],
    spec: &KernelSpec,
    cfg: &SolverConfig,
) -> Result<PredictionRule> {
    cfg.validate()?;
    spec.validate()?;
    let solved: Vec<Result<Option<IntervalUnion>>> = grid
        .par_iter()
        .map(|x| {
            let wv = weights_at(data, x, spec)?;
            if wv.empty_neighborhood {
                return Ok(None);
            }
            let wb = WeightedBrackets::from_weights(data, &wv.weights)?;
            min_union(&wb, cfg).map(Some)
        })
        .collect();
    let mut sets = Vec::with_capacity(grid.len());
    let mut undefined = Vec::with_capacity(grid.len());
    for r in solved {
        match r? {
            Some(s) => {
                sets.push(s);
                undefined.push(false);
            }
            None => {
                sets.push(IntervalUnion::empty());
                undefined.push(true);
            }
        }
    }
    let config = RuleConfig {
        method: "min-union".into(),
        kernel: Some(spec.clone()),
        solver: Some(cfg.clone()),
        alpha: Some(cfg.alpha),
        train_size: Some(data.len()),
        ..RuleConfig::default()
    };
    PredictionRule::new(grid.to_vec(), sets, undefined, config)
}
