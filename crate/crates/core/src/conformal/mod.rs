//! Split-conformal calibration of fitted prediction rules.
//!
//! The conformity score of a bracket against a union `∪_m [t0_m, t1_m]` is
//! `min_m max(t0_m - y_lo, y_hi - t1_m)`: the smallest symmetric inflation
//! under which some component contains the bracket. Inflating the fitted
//! rule by the `⌈(1-α)(n2+1)⌉`-th smallest calibration score gives a set
//! containing a fresh bracket, and hence the latent outcome, with
//! probability at least `1 - α`.

mod differential;
mod local;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::KernelSpec;
use crate::interval::IntervalUnion;
use crate::rule::PredictionRule;
use crate::serde_inf;
use crate::solver::{fit_prediction_rule, SolverConfig};

pub use differential::{adjust_endpoints, differential_adjust, DifferentialResult};
pub use local::{calibrate_local, local_split_conformal};

/// Default share of the sample used for fitting.
pub const DEFAULT_SPLIT_FRAC: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(default, with = "serde_inf::vec", skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
    #[serde(with = "serde_inf")]
    pub threshold: f64,
    pub alpha: f64,
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calib_indices: Vec<usize>,
}

impl CalibrationResult {
    /// Copy without the per-point scores, for compact artifacts.
    pub fn without_scores(&self) -> Self {
        Self {
            scores: Vec::new(),
            ..self.clone()
        }
    }
}

/// Conformity score of `[y_lo, y_hi]` against a fixed union. The empty union
/// scores `+inf`.
pub fn score_set(y_lo: f64, y_hi: f64, set: &IntervalUnion) -> f64 {
    set.intervals()
        .iter()
        .map(|iv| (iv.lo - y_lo).max(y_hi - iv.hi))
        .fold(f64::INFINITY, f64::min)
}

/// Conformity score of `[y_lo, y_hi]` against `rule(x)`.
pub fn score(y_lo: f64, y_hi: f64, x: &[f64], rule: &PredictionRule) -> Result<f64> {
    Ok(score_set(y_lo, y_hi, &rule.set_at(x)?))
}

/// The order statistic at rank `k = ⌈(1-α)(n2+1)⌉`, or `+inf` when `k > n2`.
pub fn conformal_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let k = conformal_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// `⌈(1-α)(n2+1)⌉`, guarded against round-off just above an integer.
pub fn conformal_rank(n2: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * (n2 as f64 + 1.0)) - 1e-9).ceil().max(1.0) as usize
}

pub fn inflate(rule: &PredictionRule, theta: f64) -> PredictionRule {
    rule.inflate(theta)
}

/// Seeded random split into `(train, calibration)` index lists, each sorted.
pub fn split_indices(n: usize, split_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split_frac > 0.0 && split_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split_frac must lie in (0, 1), got {split_frac}"
        )));
    }
    if n < 2 {
        return Err(Error::TooFewObservations { required: 2, found: n });
    }
    let n1 = ((split_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n1].to_vec();
    let mut calib = idx[n1..].to_vec();
    train.sort_unstable();
    calib.sort_unstable();
    Ok((train, calib))
}

/// Scores of every calibration bracket against the uninflated grid sets.
/// Points whose nearest grid point is undefined score `+inf`.
pub fn calibration_scores(rule: &PredictionRule, calib: &Dataset) -> Result<Vec<f64>> {
    calib
        .observations()
        .par_iter()
        .map(|o| match rule.base_set_at(&o.x) {
            Ok(set) => Ok(score_set(o.y_lo, o.y_hi, set)),
            Err(Error::UndefinedAt { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect()
}

/// Replace undefined grid points by the full line.
pub(crate) fn fill_undefined(rule: &PredictionRule) -> PredictionRule {
    let mut out = rule.clone();
    for (set, undef) in out.sets.iter_mut().zip(out.undefined.iter_mut()) {
        if *undef {
            *set = IntervalUnion::full_line();
            *undef = false;
        }
    }
    out
}

/// Calibrate a fitted rule on a held-out sample and inflate it.
///
/// Undefined grid points of the fitted rule become the full line in the
/// calibrated rule.
pub fn calibrate(
    rule: &PredictionRule,
    calib: &Dataset,
    alpha: f64,
) -> Result<(PredictionRule, CalibrationResult)> {
    let scores = calibration_scores(rule, calib)?;
    let threshold = conformal_threshold(&scores, alpha)?;
    let mut out = fill_undefined(rule).inflate(threshold);
    out.config.method = format!("{}-conformal", rule.config.method);
    out.config.alpha = Some(alpha);
    out.config.threshold = Some(threshold);
    let result = CalibrationResult {
        scores,
        threshold,
        alpha,
        n2: calib.len(),
        seed: None,
        train_indices: Vec::new(),
        calib_indices: Vec::new(),
    };
    Ok((out, result))
}

/// Fit on a random share of `data`, calibrate on the rest, inflate.
pub fn split_conformal(
    data: &Dataset,
    grid: &[Vec<f64>],
    alpha: f64,
    split_frac: f64,
    spec: &KernelSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(PredictionRule, CalibrationResult)> {
    let (train_idx, calib_idx) = split_indices(data.len(), split_frac, seed)?;
    let train = data.subset(&train_idx)?;
    let calib = data.subset(&calib_idx)?;
    let fitted = fit_prediction_rule(&train, grid, spec, cfg)?;
    let (mut rule, mut result) = calibrate(&fitted, &calib, alpha)?;
    rule.config.seed = Some(seed);
    result.seed = Some(seed);
    result.train_indices = train_idx;
    result.calib_indices = calib_idx;
    Ok((rule, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{linspace_grid, RuleConfig};
    use proptest::prelude::*;

    fn u(p: &[(f64, f64)]) -> IntervalUnion {
        IntervalUnion::from_pairs(p).unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_set(0.0, 1.0, &u(&[(0.0, 1.0)])), 0.0);
        assert_eq!(score_set(0.0, 1.0, &u(&[(-1.0, 2.0)])), -1.0);
        assert_eq!(score_set(2.5, 3.5, &u(&[(0.0, 1.0), (3.0, 4.0)])), 0.5);
        assert_eq!(score_set(0.0, 1.0, &IntervalUnion::empty()), f64::INFINITY);
        assert_eq!(score_set(0.0, 1.0, &IntervalUnion::full_line()), f64::NEG_INFINITY);
    }

    #[test]
    fn threshold_examples() {
        let s: Vec<f64> = (1..=19).map(f64::from).collect();
        assert_eq!(conformal_threshold(&s, 0.1).unwrap(), 18.0);
        let s: Vec<f64> = (-4..=4).map(f64::from).collect();
        assert_eq!(conformal_threshold(&s, 0.5).unwrap(), 0.0);
        assert_eq!(conformal_threshold(&[1.0; 5], 0.05).unwrap(), f64::INFINITY);
        assert_eq!(conformal_threshold(&[], 0.1).unwrap_err(), Error::EmptyScores);
    }

    #[test]
    fn inflate_examples() {
        let grid = linspace_grid(0.0, 1.0, 2);
        let r = PredictionRule::constant(grid, u(&[(0.0, 1.0), (1.5, 2.0)]), RuleConfig::default())
            .unwrap();
        assert_eq!(inflate(&r, 0.0), r);
        assert_eq!(inflate(&r, 0.3).sets[0].to_pairs(), vec![(-0.3, 2.3)]);
        assert!(inflate(&r, 0.3).sets[0].len() == 1);
        let r1 = PredictionRule::constant(vec![vec![0.0]], u(&[(0.0, 1.0)]), RuleConfig::default())
            .unwrap();
        assert!(inflate(&r1, -0.6).sets[0].is_empty());
        assert!(inflate(&r1, f64::INFINITY).sets[0].is_full_line());
    }

    #[test]
    fn split_is_reproducible_and_disjoint() {
        let (a, b) = split_indices(100, 0.75, 3).unwrap();
        assert_eq!(a.len(), 75);
        assert_eq!(b.len(), 25);
        assert_eq!(split_indices(100, 0.75, 3).unwrap(), (a.clone(), b.clone()));
        assert_ne!(split_indices(100, 0.75, 4).unwrap().0, a);
        let mut all = a;
        all.extend(b);
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split_indices(1, 0.5, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
    }

    #[test]
    fn calibration_result_json_round_trip() {
        let r = CalibrationResult {
            scores: vec![0.1, f64::INFINITY],
            threshold: f64::INFINITY,
            alpha: 0.1,
            n2: 2,
            seed: Some(9),
            train_indices: vec![0, 3],
            calib_indices: vec![1, 2],
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"threshold\":\"inf\""));
        assert_eq!(serde_json::from_str::<CalibrationResult>(&s).unwrap(), r);
        let compact = serde_json::to_string(&r.without_scores()).unwrap();
        assert!(!compact.contains("scores"));
    }

    fn union_strategy() -> impl Strategy<Value = IntervalUnion> {
        prop::collection::vec((-20i32..20, 0i32..6), 0..4).prop_map(|v| {
            let raw: Vec<(f64, f64)> = v
                .into_iter()
                .map(|(a, w)| (a as f64 * 0.5, (a + w) as f64 * 0.5))
                .collect();
            IntervalUnion::from_pairs(&raw).unwrap()
        })
    }

    proptest! {
        #[test]
        fn score_sign_matches_containment(set in union_strategy(), lo in -24i32..24, w in 0i32..8) {
            let (yl, yu) = (lo as f64 * 0.5, (lo + w) as f64 * 0.5);
            let s = score_set(yl, yu, &set);
            prop_assert_eq!(s <= 0.0, set.contains_bracket(yl, yu));
        }

        #[test]
        fn inflation_is_monotone(set in union_strategy(), t1 in -3.0f64..3.0, dt in 0.0f64..3.0, y in -25.0f64..25.0) {
            let small = set.inflate(t1);
            let big = set.inflate(t1 + dt);
            if small.contains_point(y) {
                prop_assert!(big.contains_point(y));
            }
        }

        #[test]
        fn threshold_is_order_statistic(scores in prop::collection::vec(-5.0f64..5.0, 1..60), alpha in 0.01f64..0.99) {
            let t = conformal_threshold(&scores, alpha).unwrap();
            let k = conformal_rank(scores.len(), alpha);
            if k > scores.len() {
                prop_assert!(t.is_infinite());
            } else {
                let below = scores.iter().filter(|s| **s <= t).count();
                prop_assert!(below >= k);
                let strictly = scores.iter().filter(|s| **s < t).count();
                prop_assert!(strictly < k);
            }
        }
    }
}
