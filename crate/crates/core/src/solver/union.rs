//! Dynamic program for the union-of-intervals problem.
//!
//! Candidate components are pairs `(a, b)` of an observed lower endpoint `a`
//! and an observed upper endpoint `b >= a`; a component collects the weight
//! `W(a, b)` of brackets lying inside it. Components of a union are strictly
//! separated, so the weight of a union is the sum of its component weights.
//!
//! Layer `m` keeps, for every candidate left endpoint `a`, the Pareto
//! frontier `P_m(a)` of (weight, length) over unions of at most `m`
//! components that end strictly before `a`. Weights are capped at `τ` and
//! bucketed on `weight_grid`; within a bucket only the shortest union
//! survives. The last layer does not build frontiers: for each `(a, b)` it
//! looks up the shortest prefix in `P_{M-1}(a)` that tops the weight up to
//! `τ`.

use super::{
    lex_less, min_interval, SolverConfig, WeightedBrackets, FEASIBILITY_TOL, ZERO_WEIGHT,
};
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

const ROOT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    parent: u32,
}

#[derive(Clone, Copy)]
struct Point {
    w: f64,
    l: f64,
    node: u32,
}

#[derive(Clone, Copy)]
struct Cand {
    w: f64,
    l: f64,
    parent: u32,
    a: u32,
    b: u32,
}

trait Weighted: Copy {
    fn w(&self) -> f64;
    fn l(&self) -> f64;
}

impl Weighted for Point {
    fn w(&self) -> f64 {
        self.w
    }
    fn l(&self) -> f64 {
        self.l
    }
}

impl Weighted for Cand {
    fn w(&self) -> f64 {
        self.w
    }
    fn l(&self) -> f64 {
        self.l
    }
}

struct Grid {
    target: f64,
    width: f64,
}

impl Grid {
    fn bucket(&self, w: f64) -> i64 {
        if w >= self.target {
            i64::MAX
        } else {
            (w / self.width).floor() as i64
        }
    }

    /// Reduce `pts` to its bucketed Pareto frontier, sorted by increasing
    /// weight (and strictly increasing length). The sort is stable, so among
    /// exact ties the earliest point wins.
    fn prune<T: Weighted>(&self, pts: &mut Vec<T>) {
        if pts.len() <= 1 {
            return;
        }
        pts.sort_by(|x, y| {
            self.bucket(y.w())
                .cmp(&self.bucket(x.w()))
                .then(x.l().total_cmp(&y.l()))
        });
        let mut best_l = f64::INFINITY;
        let mut keep = 0;
        for i in 0..pts.len() {
            if pts[i].l() < best_l {
                best_l = pts[i].l();
                pts[keep] = pts[i];
                keep += 1;
            }
        }
        pts.truncate(keep);
        pts.reverse();
    }
}

struct Instance {
    lows: Vec<f64>,
    highs: Vec<f64>,
    /// `(hi_rank, w)` of the brackets starting at each distinct low.
    by_low: Vec<Vec<(usize, f64)>>,
}

impl Instance {
    fn new(wb: &WeightedBrackets) -> Self {
        let entries = wb.entries();
        let mut lows: Vec<f64> = entries.iter().map(|e| e.lo).collect();
        lows.sort_by(f64::total_cmp);
        lows.dedup();
        let mut highs: Vec<f64> = entries.iter().map(|e| e.hi).collect();
        highs.sort_by(f64::total_cmp);
        highs.dedup();
        let mut by_low = vec![Vec::new(); lows.len()];
        for e in entries {
            let ia = lows.partition_point(|&v| v < e.lo);
            let k = highs.partition_point(|&v| v < e.hi);
            by_low[ia].push((k, e.w));
        }
        Self {
            lows,
            highs,
            by_low,
        }
    }
}

/// Weight per hi-rank of the brackets with `lo >= a`, maintained as `a`
/// sweeps upward. Counts reset empty ranks to exactly zero.
struct Column {
    w: Vec<f64>,
    count: Vec<u32>,
}

impl Column {
    fn new(inst: &Instance) -> Self {
        let mut col = Self {
            w: vec![0.0; inst.highs.len()],
            count: vec![0; inst.highs.len()],
        };
        for group in &inst.by_low {
            for &(k, w) in group {
                col.w[k] += w;
                col.count[k] += 1;
            }
        }
        col
    }

    fn remove(&mut self, group: &[(usize, f64)]) {
        for &(k, w) in group {
            self.count[k] -= 1;
            if self.count[k] == 0 {
                self.w[k] = 0.0;
            } else {
                self.w[k] -= w;
            }
        }
    }
}

fn reconstruct(arena: &[Node], inst: &Instance, mut node: u32, last: (u32, u32)) -> Vec<(f64, f64)> {
    let mut comps = vec![(inst.lows[last.0 as usize], inst.highs[last.1 as usize])];
    while node != ROOT {
        let n = arena[node as usize];
        comps.push((inst.lows[n.a as usize], inst.highs[n.b as usize]));
        node = n.parent;
    }
    comps.reverse();
    comps
}

/// Shortest union of at most `M` intervals with contained weight at least
/// `τ`, exact up to the `weight_grid` bucketing. Among unions of equal total
/// length found by the final scan, the lexicographically leftmost wins.
pub fn min_union(wb: &WeightedBrackets, cfg: &SolverConfig) -> Result<IntervalUnion> {
    cfg.validate()?;
    if wb.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tau = cfg.threshold();
    let target = tau - FEASIBILITY_TOL;
    let min_cw = cfg.min_component_weight - FEASIBILITY_TOL;
    let comp_ok = |w: f64| w > ZERO_WEIGHT && w >= min_cw;
    let grid = Grid {
        target,
        width: cfg.weight_grid,
    };

    let single = min_interval(wb, cfg)?;
    let ub = single.hi - single.lo;
    let mut best_len = ub;
    let mut best = vec![(single.lo, single.hi)];

    let inst = Instance::new(wb);
    let nl = inst.lows.len();
    let nh = inst.highs.len();
    let root = Point {
        w: 0.0,
        l: 0.0,
        node: ROOT,
    };
    let mut arena: Vec<Node> = Vec::new();
    let mut prefix: Vec<Vec<Point>> = vec![vec![root]; nl];

    for m in 1..=cfg.max_components {
        let last = m == cfg.max_components;
        let mut col = Column::new(&inst);
        let mut ending: Vec<Vec<Cand>> = if last { Vec::new() } else { vec![Vec::new(); nh] };
        let mut pruned_len = vec![0usize; if last { 0 } else { nh }];

        for ia in 0..nl {
            if ia > 0 {
                col.remove(&inst.by_low[ia - 1]);
            }
            let a = inst.lows[ia];
            let frontier = &prefix[ia];
            let open = frontier.partition_point(|p| p.w < target);
            if open == 0 && !last {
                continue;
            }
            let start = inst.highs.partition_point(|&h| h < a);
            let mut w_ab = 0.0;
            for k in start..nh {
                if col.count[k] == 0 {
                    continue;
                }
                w_ab += col.w[k];
                let b = inst.highs[k];
                let len = b - a;
                if len > if last { best_len } else { ub } {
                    break;
                }
                if !comp_ok(w_ab) {
                    continue;
                }
                if last {
                    let need = target - w_ab;
                    let idx = frontier.partition_point(|p| p.w < need);
                    if idx == frontier.len() {
                        continue;
                    }
                    let p = frontier[idx];
                    let total = p.l + len;
                    if total < best_len {
                        best_len = total;
                        best = reconstruct(&arena, &inst, p.node, (ia as u32, k as u32));
                    } else if total == best_len {
                        let cand = reconstruct(&arena, &inst, p.node, (ia as u32, k as u32));
                        if lex_less(&cand, &best) {
                            best = cand;
                        }
                    }
                } else {
                    let bucket = &mut ending[k];
                    for p in &frontier[..open] {
                        let l = p.l + len;
                        if l > ub {
                            break;
                        }
                        bucket.push(Cand {
                            w: p.w + w_ab,
                            l,
                            parent: p.node,
                            a: ia as u32,
                            b: k as u32,
                        });
                    }
                    if bucket.len() > 2 * pruned_len[k] + 256 {
                        grid.prune(bucket);
                        pruned_len[k] = bucket.len();
                    }
                }
            }
        }
        if last {
            break;
        }

        // Materialize the layer-m frontiers ending at each high, then fold
        // them into the prefix frontiers.
        let mut ending_pts: Vec<Vec<Point>> = Vec::with_capacity(nh);
        for mut cands in ending {
            grid.prune(&mut cands);
            ending_pts.push(
                cands
                    .into_iter()
                    .map(|c| {
                        arena.push(Node {
                            a: c.a,
                            b: c.b,
                            parent: c.parent,
                        });
                        Point {
                            w: c.w,
                            l: c.l,
                            node: (arena.len() - 1) as u32,
                        }
                    })
                    .collect(),
            );
        }
        let mut acc: Vec<Point> = Vec::new();
        let mut k = 0;
        let mut next_prefix = Vec::with_capacity(nl);
        for (ia, prev) in prefix.iter().enumerate() {
            let a = inst.lows[ia];
            let mut grew = false;
            while k < nh && inst.highs[k] < a {
                acc.extend_from_slice(&ending_pts[k]);
                grew = true;
                k += 1;
            }
            if grew {
                grid.prune(&mut acc);
            }
            let mut merged = prev.clone();
            merged.extend_from_slice(&acc);
            grid.prune(&mut merged);
            next_prefix.push(merged);
        }
        prefix = next_prefix;
    }

    IntervalUnion::from_pairs(&best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{brute_force_min_union, min_interval};
    use proptest::prelude::*;

    fn cfg(alpha: f64, m: usize) -> SolverConfig {
        SolverConfig {
            weight_grid: 1e-6,
            ..SolverConfig::new(alpha, 0.0, m).unwrap()
        }
    }

    #[test]
    fn two_clusters_split() {
        let mut triples = Vec::new();
        for _ in 0..9 {
            triples.push((0.0, 1.0, 0.05));
            triples.push((10.0, 11.0, 0.05));
        }
        triples.push((0.0, 11.0, 0.1));
        let wb = WeightedBrackets::from_triples(&triples).unwrap();
        let u = min_union(&wb, &cfg(0.15, 2)).unwrap();
        assert_eq!(u.to_pairs(), vec![(0.0, 1.0), (10.0, 11.0)]);
        let u1 = min_union(&wb, &cfg(0.15, 1)).unwrap();
        assert_eq!(u1.to_pairs(), vec![(0.0, 11.0)]);
    }

    #[test]
    fn single_bracket_any_m() {
        let wb = WeightedBrackets::from_triples(&[(2.0, 3.5, 1.0)]).unwrap();
        for m in 1..5 {
            assert_eq!(min_union(&wb, &cfg(0.3, m)).unwrap().to_pairs(), vec![(2.0, 3.5)]);
        }
    }

    #[test]
    fn example_one_slack() {
        let wb = WeightedBrackets::from_triples(&[(0.0, 1.0, 0.5), (0.0, 2.0, 0.5)]).unwrap();
        let c = SolverConfig::new(0.5, 0.1, 2).unwrap();
        assert_eq!(min_union(&wb, &c).unwrap().to_pairs(), vec![(0.0, 1.0)]);
        let wb = WeightedBrackets::from_triples(&[(0.0, 1.0, 0.49), (0.0, 2.0, 0.51)]).unwrap();
        let c = SolverConfig::new(0.5, 0.0, 2).unwrap();
        assert_eq!(min_union(&wb, &c).unwrap().to_pairs(), vec![(0.0, 2.0)]);
    }

    #[test]
    fn three_clusters_need_three_components() {
        let wb = WeightedBrackets::from_triples(&[
            (0.0, 1.0, 0.3),
            (5.0, 6.0, 0.3),
            (20.0, 21.0, 0.3),
            (2.0, 3.0, 0.1),
        ])
        .unwrap();
        let u = min_union(&wb, &cfg(0.15, 3)).unwrap();
        assert_eq!(u.to_pairs(), vec![(0.0, 1.0), (5.0, 6.0), (20.0, 21.0)]);
        let u2 = min_union(&wb, &cfg(0.15, 2)).unwrap();
        assert_eq!(u2.to_pairs(), vec![(0.0, 6.0), (20.0, 21.0)]);
    }

    #[test]
    fn min_component_weight_blocks_atoms() {
        let wb = WeightedBrackets::from_triples(&[
            (0.0, 4.0, 0.48),
            (9.0, 9.0, 0.02),
            (2.0, 5.0, 0.45),
            (20.0, 30.0, 0.05),
        ])
        .unwrap();
        let plain = cfg(0.5, 2);
        let u = min_union(&wb, &plain).unwrap();
        assert_eq!(u.to_pairs(), vec![(0.0, 4.0), (9.0, 9.0)]);
        let guarded = SolverConfig {
            min_component_weight: 0.05,
            ..plain
        };
        let u = min_union(&wb, &guarded).unwrap();
        assert_eq!(u.to_pairs(), vec![(0.0, 5.0)]);
        let b = brute_force_min_union(&wb, &guarded).unwrap();
        assert_eq!(b.to_pairs(), u.to_pairs());
    }

    fn instance() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0i32..8, 0i32..4, 1u32..30), 1..14).prop_map(|v| {
            v.into_iter()
                .map(|(lo, w, m)| (lo as f64, (lo + w) as f64, m as f64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn m1_equals_min_interval(raw in instance(), alpha in 0.05f64..0.9) {
            let wb = WeightedBrackets::from_triples(&raw).unwrap();
            let c = cfg(alpha, 1);
            let u = min_union(&wb, &c).unwrap();
            let iv = min_interval(&wb, &c).unwrap();
            prop_assert_eq!(u.to_pairs(), vec![(iv.lo, iv.hi)]);
        }

        #[test]
        fn matches_oracle_and_is_feasible(raw in instance(), alpha in 0.05f64..0.9, m in 1usize..4) {
            let wb = WeightedBrackets::from_triples(&raw).unwrap();
            let c = cfg(alpha, m);
            let u = min_union(&wb, &c).unwrap();
            let b = brute_force_min_union(&wb, &c).unwrap();
            prop_assert!(u.len() <= m);
            prop_assert!(wb.coverage(&u) >= c.threshold() - FEASIBILITY_TOL);
            prop_assert_eq!(u.volume(), b.volume());
        }

        #[test]
        fn monotone_in_alpha_and_m(raw in instance(), a1 in 0.05f64..0.45, gap in 0.0f64..0.4, m in 1usize..3) {
            let wb = WeightedBrackets::from_triples(&raw).unwrap();
            let v1 = min_union(&wb, &cfg(a1, m)).unwrap().volume();
            let v2 = min_union(&wb, &cfg(a1 + gap, m)).unwrap().volume();
            prop_assert!(v1 >= v2);
            let vm = min_union(&wb, &cfg(a1, m + 1)).unwrap().volume();
            prop_assert!(vm <= v1);
        }
    }
}
