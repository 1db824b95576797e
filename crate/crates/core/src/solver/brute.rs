use super::{lex_less, SolverConfig, WeightedBrackets, FEASIBILITY_TOL, ZERO_WEIGHT};
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

pub const BRUTE_FORCE_ENDPOINT_LIMIT: usize = 16;

struct Search<'a> {
    wb: &'a WeightedBrackets,
    comps: Vec<(f64, f64)>,
    max: usize,
    target: f64,
    best: Option<(f64, Vec<(f64, f64)>)>,
}

impl Search<'_> {
    fn visit(&mut self, chain: &mut Vec<(f64, f64)>, from: usize) {
        if !chain.is_empty() {
            let u = IntervalUnion::from_pairs(chain).expect("candidate components are valid");
            if self.wb.coverage(&u) >= self.target {
                let len: f64 = chain.iter().map(|c| c.1 - c.0).sum();
                let better = match &self.best {
                    None => true,
                    Some((bl, bc)) => len < *bl || (len == *bl && lex_less(chain, bc)),
                };
                if better {
                    self.best = Some((len, chain.clone()));
                }
            }
        }
        if chain.len() == self.max {
            return;
        }
        for i in from..self.comps.len() {
            let c = self.comps[i];
            if chain.last().is_some_and(|p| !(p.1 < c.0)) {
                continue;
            }
            chain.push(c);
            self.visit(chain, i + 1);
            chain.pop();
        }
    }
}

/// Exhaustive minimum over unions of at most `M` candidate components.
///
/// Enumerates every chain of strictly separated components `[a, b]` with `a`
/// an observed lower endpoint and `b` an observed upper endpoint, and scores
/// each union by direct containment. Limited to instances with at most
/// [`BRUTE_FORCE_ENDPOINT_LIMIT`] distinct endpoints.
pub fn brute_force_min_union(wb: &WeightedBrackets, cfg: &SolverConfig) -> Result<IntervalUnion> {
    cfg.validate()?;
    if wb.is_empty() {
        return Err(Error::EmptyInput);
    }
    let entries = wb.entries();
    let mut all: Vec<f64> = entries.iter().flat_map(|e| [e.lo, e.hi]).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    if all.len() > BRUTE_FORCE_ENDPOINT_LIMIT {
        return Err(Error::InstanceTooLarge {
            endpoints: all.len(),
            limit: BRUTE_FORCE_ENDPOINT_LIMIT,
        });
    }
    let mut lows: Vec<f64> = entries.iter().map(|e| e.lo).collect();
    lows.sort_by(f64::total_cmp);
    lows.dedup();
    let mut highs: Vec<f64> = entries.iter().map(|e| e.hi).collect();
    highs.sort_by(f64::total_cmp);
    highs.dedup();

    let min_cw = cfg.min_component_weight - FEASIBILITY_TOL;
    let mut comps = Vec::new();
    for &a in &lows {
        for &b in highs.iter().filter(|&&b| b >= a) {
            let w: f64 = entries
                .iter()
                .filter(|e| e.lo >= a && e.hi <= b)
                .map(|e| e.w)
                .sum();
            if w > ZERO_WEIGHT && w >= min_cw {
                comps.push((a, b));
            }
        }
    }
    let mut search = Search {
        wb,
        comps,
        max: cfg.max_components,
        target: cfg.threshold() - FEASIBILITY_TOL,
        best: None,
    };
    search.visit(&mut Vec::new(), 0);
    let (_, best) = search.best.ok_or(Error::EmptyInput)?;
    IntervalUnion::from_pairs(&best)
}
