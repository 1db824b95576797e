use super::{SolverConfig, WeightedBrackets, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Fenwick tree over hi-ranks with a weight lower-bound search.
struct Fenwick {
    tree: Vec<f64>,
    log: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        let mut log = 0;
        while (1usize << (log + 1)) <= n {
            log += 1;
        }
        Self {
            tree: vec![0.0; n + 1],
            log,
        }
    }

    fn add(&mut self, idx: usize, w: f64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += w;
            i += i & i.wrapping_neg();
        }
    }

    /// Smallest 0-based index whose prefix sum reaches `target`, if any.
    fn lower_bound(&self, target: f64) -> Option<usize> {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut acc = 0.0;
        for k in (0..=self.log).rev() {
            let next = pos + (1 << k);
            if next <= n && acc + self.tree[next] < target {
                pos = next;
                acc += self.tree[next];
            }
        }
        (pos < n).then_some(pos)
    }
}

fn sorted_distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Shortest single interval `[t0, t1]` with contained weight at least `τ`.
///
/// Sweeps the candidate left endpoint downward while a Fenwick tree over the
/// ranks of the upper endpoints gives the shortest feasible right endpoint.
/// Ties go to the smaller `t0`.
pub fn min_interval(wb: &WeightedBrackets, cfg: &SolverConfig) -> Result<Interval> {
    cfg.validate()?;
    let entries = wb.entries();
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let target = cfg.threshold() - FEASIBILITY_TOL;
    let highs = sorted_distinct(entries.iter().map(|e| e.hi).collect());
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| entries[j].lo.total_cmp(&entries[i].lo));

    let mut fw = Fenwick::new(highs.len());
    let mut best: Option<(f64, f64)> = None;
    let mut pos = 0;
    while pos < order.len() {
        let a = entries[order[pos]].lo;
        while pos < order.len() && entries[order[pos]].lo == a {
            let e = &entries[order[pos]];
            let rank = highs.partition_point(|&h| h < e.hi);
            fw.add(rank, e.w);
            pos += 1;
        }
        if let Some(k) = fw.lower_bound(target) {
            let b = highs[k];
            match best {
                Some((t0, t1)) if b - a > t1 - t0 => {}
                _ => best = Some((a, b)),
            }
        }
    }
    let (t0, t1) = best.ok_or(Error::EmptyInput)?;
    Interval::new(t0, t1)
}

/// Quadratic reference for [`min_interval`]; same result and tie-breaking.
pub fn min_interval_reference(wb: &WeightedBrackets, cfg: &SolverConfig) -> Result<Interval> {
    cfg.validate()?;
    let entries = wb.entries();
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let target = cfg.threshold() - FEASIBILITY_TOL;
    let lows = sorted_distinct(entries.iter().map(|e| e.lo).collect());
    let mut best: Option<(f64, f64)> = None;
    for &a in &lows {
        let mut inside: Vec<(f64, f64)> = entries
            .iter()
            .filter(|e| e.lo >= a)
            .map(|e| (e.hi, e.w))
            .collect();
        inside.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut acc = 0.0;
        let mut i = 0;
        while i < inside.len() {
            let b = inside[i].0;
            while i < inside.len() && inside[i].0 == b {
                acc += inside[i].1;
                i += 1;
            }
            if acc >= target {
                let better = match best {
                    None => true,
                    Some((t0, t1)) => {
                        let (l, bl) = (b - a, t1 - t0);
                        l < bl || (l == bl && (a, b) < (t0, t1))
                    }
                };
                if better {
                    best = Some((a, b));
                }
                break;
            }
        }
    }
    let (t0, t1) = best.ok_or(Error::EmptyInput)?;
    Interval::new(t0, t1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(alpha: f64) -> SolverConfig {
        SolverConfig::new(alpha, 0.0, 1).unwrap()
    }

    #[test]
    fn picks_densest_region() {
        let wb = WeightedBrackets::from_triples(&[
            (0.0, 1.0, 0.25),
            (0.5, 1.5, 0.25),
            (1.0, 2.0, 0.25),
            (10.0, 11.0, 0.25),
        ])
        .unwrap();
        let iv = min_interval(&wb, &cfg(0.25)).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 2.0));
    }

    #[test]
    fn point_masses() {
        let wb =
            WeightedBrackets::from_triples(&[(0.0, 0.0, 0.45), (5.0, 5.0, 0.45), (9.0, 9.0, 0.1)])
                .unwrap();
        let iv = min_interval(&wb, &cfg(0.5)).unwrap();
        assert_eq!((iv.lo, iv.hi), (5.0, 9.0));
        let iv = min_interval(&wb, &cfg(0.1)).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 5.0));
    }

    #[test]
    fn ties_prefer_left() {
        let wb = WeightedBrackets::from_triples(&[(0.0, 1.0, 0.5), (3.0, 4.0, 0.5)]).unwrap();
        let iv = min_interval(&wb, &cfg(0.5)).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
    }

    #[test]
    fn fenwick_lower_bound() {
        let mut fw = Fenwick::new(5);
        fw.add(1, 0.5);
        fw.add(3, 0.25);
        assert_eq!(fw.lower_bound(0.4), Some(1));
        assert_eq!(fw.lower_bound(0.6), Some(3));
        assert_eq!(fw.lower_bound(0.8), None);
    }

    proptest! {
        #[test]
        fn fast_path_matches_reference(
            raw in prop::collection::vec((0i32..30, 0i32..6, 1u32..20), 1..60),
            alpha in 0.02f64..0.9,
        ) {
            let triples: Vec<(f64, f64, f64)> = raw
                .iter()
                .map(|&(lo, w, m)| (lo as f64 * 0.5, (lo + w) as f64 * 0.5, m as f64))
                .collect();
            let wb = WeightedBrackets::from_triples(&triples).unwrap();
            let c = cfg(alpha);
            let fast = min_interval(&wb, &c).unwrap();
            let slow = min_interval_reference(&wb, &c).unwrap();
            prop_assert_eq!((fast.lo, fast.hi), (slow.lo, slow.hi));
            let u = crate::interval::IntervalUnion::single(fast);
            prop_assert!(wb.coverage(&u) >= c.threshold() - FEASIBILITY_TOL);
        }
    }
}
