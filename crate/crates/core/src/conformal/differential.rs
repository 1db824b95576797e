//! Per-endpoint conformal adjustment.
//!
//! Instead of widening every component by the same `θ`, component `m` becomes
//! `[t0_m - w_{2m}, t1_m + w_{2m+1}]`, with `w` of small Euclidean norm
//! subject to at least `k = ⌈(1-α)(n2+1)⌉` calibration brackets being
//! contained. Starting from the feasible symmetric solution `w = θ·1`, each
//! coordinate in turn is moved to the feasible value closest to zero. Since
//! coverage is monotone in every coordinate, the feasible values of one
//! coordinate form a half-line, and its boundary is found by bisection over
//! the coordinate values at which some containment can change.

use super::{conformal_rank, conformal_threshold, fill_undefined, score_set};
use crate::data::Observation;
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalUnion};
use crate::rule::PredictionRule;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialResult {
    pub rule: PredictionRule,
    pub weights: Vec<f64>,
    /// The symmetric threshold used as the starting point.
    pub symmetric_threshold: f64,
    pub covered: usize,
    pub required: usize,
}

impl DifferentialResult {
    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Widen component `m` of `set` by `w[2m]` on the left and `w[2m+1]` on the
/// right. Components past `w.len() / 2` are kept as is; components that
/// become empty are dropped.
pub fn adjust_endpoints(set: &IntervalUnion, w: &[f64]) -> IntervalUnion {
    let raw: Vec<Interval> = set
        .intervals()
        .iter()
        .enumerate()
        .filter_map(|(m, iv)| {
            let (wl, wr) = if 2 * m + 1 < w.len() {
                (w[2 * m], w[2 * m + 1])
            } else {
                (0.0, 0.0)
            };
            let lo = iv.lo - wl;
            let hi = iv.hi + wr;
            (lo <= hi).then_some(Interval { lo, hi })
        })
        .collect();
    IntervalUnion::normalize(&raw).expect("adjusted components are ordered")
}

struct Problem<'a> {
    sets: Vec<Option<&'a IntervalUnion>>,
    calib: &'a [Observation],
    required: usize,
}

impl Problem<'_> {
    fn covered(&self, w: &[f64]) -> usize {
        self.sets
            .iter()
            .zip(self.calib)
            .filter(|(s, o)| match s {
                Some(set) => adjust_endpoints(set, w).contains_bracket(o.y_lo, o.y_hi),
                None => false,
            })
            .count()
    }

    fn feasible(&self, w: &[f64]) -> bool {
        self.covered(w) >= self.required
    }

    /// Values of coordinate `c` at which the containment of some calibration
    /// bracket can switch.
    fn breakpoints(&self, w: &[f64], c: usize) -> Vec<f64> {
        let m = c / 2;
        let left = c % 2 == 0;
        let mut out = Vec::new();
        for (set, o) in self.sets.iter().zip(self.calib) {
            let Some(set) = set else { continue };
            let comps = set.intervals();
            let Some(own) = comps.get(m) else { continue };
            let widen = |k: usize| -> (f64, f64) {
                let (wl, wr) = if 2 * k + 1 < w.len() {
                    (w[2 * k], w[2 * k + 1])
                } else {
                    (0.0, 0.0)
                };
                (comps[k].lo - wl, comps[k].hi + wr)
            };
            let (own_lo, own_hi) = widen(m);
            if left {
                out.push(own.lo - o.y_lo);
                out.push(own.lo - own_hi);
                for k in (0..comps.len()).filter(|&k| k != m) {
                    out.push(own.lo - widen(k).1);
                }
            } else {
                out.push(o.y_hi - own.hi);
                out.push(own_lo - own.hi);
                for k in (0..comps.len()).filter(|&k| k != m) {
                    out.push(widen(k).0 - own.hi);
                }
            }
        }
        out
    }

    /// The feasible value of coordinate `c` closest to zero, other
    /// coordinates fixed. `w` must be feasible on entry.
    fn best_coordinate(&self, w: &mut [f64], c: usize) -> f64 {
        let cur = w[c];
        if cur == 0.0 {
            return 0.0;
        }
        w[c] = 0.0;
        if self.feasible(w) {
            return 0.0;
        }
        // 0 infeasible and `cur` feasible: the boundary lies in (0, cur].
        let mut cands: Vec<f64> = self
            .breakpoints(w, c)
            .into_iter()
            .filter(|v| *v > 0.0 && *v < cur)
            .collect();
        cands.push(cur);
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let (mut lo, mut hi) = (0, cands.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            w[c] = cands[mid];
            if self.feasible(w) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        w[c] = cur;
        cands[lo]
    }
}

/// Per-endpoint adjustment of a fitted rule on a calibration sample.
///
/// The returned weights never have larger norm than the symmetric solution.
/// When the symmetric threshold is `+inf` (too few calibration points) the
/// rule becomes the full line everywhere. Calibration points whose nearest
/// grid point is undefined count as uncovered, and undefined grid points
/// become the full line.
pub fn differential_adjust(
    rule: &PredictionRule,
    calib: &[Observation],
    alpha: f64,
) -> Result<DifferentialResult> {
    if calib.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut sets = Vec::with_capacity(calib.len());
    for o in calib {
        match rule.base_set_at(&o.x) {
            Ok(s) => sets.push(Some(s)),
            Err(Error::UndefinedAt { .. }) => sets.push(None),
            Err(e) => return Err(e),
        }
    }
    let scores: Vec<f64> = sets
        .iter()
        .zip(calib)
        .map(|(s, o)| s.map_or(f64::INFINITY, |s| score_set(o.y_lo, o.y_hi, s)))
        .collect();
    let theta = conformal_threshold(&scores, alpha)?;
    let required = conformal_rank(calib.len(), alpha);
    let m = rule.max_components().max(1);
    let filled = fill_undefined(rule);

    let finish = |weights: Vec<f64>, covered: usize| {
        let mut out = filled.clone();
        out.sets = filled
            .sets
            .iter()
            .map(|s| {
                if theta.is_infinite() {
                    s.inflate(theta)
                } else {
                    adjust_endpoints(s, &weights)
                }
            })
            .collect();
        out.config.method = format!("{}-differential", rule.config.method);
        out.config.alpha = Some(alpha);
        out.config.threshold = Some(theta);
        out.config.endpoint_adjustment = weights.clone();
        DifferentialResult {
            rule: out,
            weights,
            symmetric_threshold: theta,
            covered,
            required,
        }
    };

    if theta.is_infinite() {
        return Ok(finish(vec![theta; 2 * m], calib.len()));
    }
    let problem = Problem {
        sets,
        calib,
        required,
    };
    // A score of -inf only arises from full-line sets, which need no widening.
    let mut w = vec![theta; 2 * m];
    if theta == f64::NEG_INFINITY {
        w.fill(0.0);
    }
    debug_assert!(problem.feasible(&w));
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for c in 0..w.len() {
            let v = problem.best_coordinate(&mut w, c);
            if v != w[c] {
                w[c] = v;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let covered = problem.covered(&w);
    Ok(finish(w, covered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{linspace_grid, RuleConfig};

    fn rule(pairs: &[(f64, f64)]) -> PredictionRule {
        PredictionRule::constant(
            linspace_grid(0.0, 1.0, 3),
            IntervalUnion::from_pairs(pairs).unwrap(),
            RuleConfig::default(),
        )
        .unwrap()
    }

    fn obs(x: f64, lo: f64, hi: f64) -> Observation {
        Observation::new(vec![x], lo, hi).unwrap()
    }

    #[test]
    fn one_sided_miss_widens_one_side() {
        let r = rule(&[(0.0, 1.0)]);
        let calib: Vec<Observation> = (0..50)
            .map(|i| {
                let y = if i % 2 == 0 { 0.5 } else { 1.0 + 0.01 * i as f64 };
                obs(0.5, y, y)
            })
            .collect();
        let res = differential_adjust(&r, &calib, 0.1).unwrap();
        assert!(res.symmetric_threshold > 0.0);
        assert_eq!(res.weights[0], 0.0);
        assert!(res.weights[1] > 0.0);
        assert!(res.weights[1] <= res.symmetric_threshold);
        assert!(res.covered >= res.required);
        assert!(res.norm() <= res.symmetric_threshold * 2f64.sqrt());
    }

    #[test]
    fn covering_rule_needs_no_adjustment() {
        let r = rule(&[(0.0, 1.0)]);
        let calib: Vec<Observation> = (0..30).map(|i| obs(0.2, 0.01 * i as f64, 0.3)).collect();
        let res = differential_adjust(&r, &calib, 0.1).unwrap();
        assert!(res.symmetric_threshold <= 0.0);
        assert_eq!(res.weights, vec![0.0, 0.0]);
        assert_eq!(res.rule.sets[0].to_pairs(), vec![(0.0, 1.0)]);
    }

    #[test]
    fn symmetric_misses_give_symmetric_weights() {
        let r = rule(&[(0.0, 1.0)]);
        let calib: Vec<Observation> = (0..40)
            .map(|i| {
                let d = 0.02 * (i / 2) as f64;
                if i % 2 == 0 {
                    obs(0.5, -d, -d)
                } else {
                    obs(0.5, 1.0 + d, 1.0 + d)
                }
            })
            .collect();
        let res = differential_adjust(&r, &calib, 0.2).unwrap();
        assert!((res.weights[0] - res.weights[1]).abs() <= 0.021);
        assert!(res.weights[0] <= res.symmetric_threshold);
        assert!(res.covered >= res.required);
    }

    #[test]
    fn tiny_calibration_gives_full_line() {
        let r = rule(&[(0.0, 1.0)]);
        let calib = vec![obs(0.5, 3.0, 3.0); 5];
        let res = differential_adjust(&r, &calib, 0.05).unwrap();
        assert!(res.rule.sets.iter().all(|s| s.is_full_line()));
    }

    #[test]
    fn two_component_rule() {
        let r = rule(&[(0.0, 1.0), (5.0, 6.0)]);
        let mut calib = Vec::new();
        for i in 0..30 {
            calib.push(obs(0.5, 0.5, 0.5));
            calib.push(obs(0.5, 6.0 + 0.01 * i as f64, 6.0 + 0.01 * i as f64));
        }
        let res = differential_adjust(&r, &calib, 0.1).unwrap();
        assert_eq!(res.weights.len(), 4);
        assert_eq!(res.weights[0], 0.0);
        assert_eq!(res.weights[1], 0.0);
        assert_eq!(res.weights[2], 0.0);
        assert!(res.weights[3] > 0.0);
        assert!(res.covered >= res.required);
    }

    #[test]
    fn adjust_drops_and_merges() {
        let s = IntervalUnion::from_pairs(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(adjust_endpoints(&s, &[0.0, 0.6, 0.5, 0.0]).to_pairs(), vec![(0.0, 3.0)]);
        assert_eq!(adjust_endpoints(&s, &[-1.1, 0.0, 0.0, 0.0]).to_pairs(), vec![(2.0, 3.0)]);
    }
}
