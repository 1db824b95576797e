use serde::{Deserialize, Serialize};

use super::models::{generate, Model};
use crate::error::{Error, Result};
use crate::rule::{Partition, PredictionRule};

/// Fresh-sample coverage of a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub n_eval: usize,
    /// Share of fresh brackets contained in the prediction set.
    pub bracket: f64,
    /// Share of fresh latent outcomes contained in the prediction set.
    pub latent: f64,
    /// Evaluation points whose nearest grid point was undefined; these
    /// count as not covered.
    pub undefined: usize,
    /// Bracket coverage and point count per partition cell, when a
    /// partition was supplied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_cell: Vec<CellCoverage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCoverage {
    pub count: usize,
    pub bracket: f64,
}

/// Coverage on pre-drawn evaluation points.
pub fn coverage_on(
    rule: &PredictionRule,
    points: &[(Vec<f64>, f64, f64, f64)],
    partition: Option<&Partition>,
) -> Result<CoverageStats> {
    let mut hit = 0usize;
    let mut hit_latent = 0usize;
    let mut undefined = 0usize;
    let cells = partition.map_or(0, |p| p.len());
    let mut cell_n = vec![0usize; cells];
    let mut cell_hit = vec![0usize; cells];
    for (x, lo, hi, y) in points {
        let covered = match rule.set_at(x) {
            Ok(set) => {
                if set.contains_point(*y) {
                    hit_latent += 1;
                }
                set.contains_bracket(*lo, *hi)
            }
            Err(Error::UndefinedAt { .. }) => {
                undefined += 1;
                false
            }
            Err(e) => return Err(e),
        };
        if covered {
            hit += 1;
        }
        if let Some(p) = partition {
            if let Ok(k) = p.cell_of(x) {
                cell_n[k] += 1;
                if covered {
                    cell_hit[k] += 1;
                }
            }
        }
    }
    let n = points.len().max(1) as f64;
    Ok(CoverageStats {
        n_eval: points.len(),
        bracket: hit as f64 / n,
        latent: hit_latent as f64 / n,
        undefined,
        per_cell: cell_n
            .iter()
            .zip(&cell_hit)
            .map(|(&c, &h)| CellCoverage {
                count: c,
                bracket: if c > 0 { h as f64 / c as f64 } else { f64::NAN },
            })
            .collect(),
    })
}

/// Draw `n_eval` fresh points from `model` with `seed`.
pub fn eval_points(model: Model, n_eval: usize, seed: u64) -> Result<Vec<(Vec<f64>, f64, f64, f64)>> {
    let s = generate(model, n_eval, seed)?;
    Ok(s.data
        .iter()
        .zip(&s.latent)
        .map(|(o, y)| (o.x.clone(), o.y_lo, o.y_hi, *y))
        .collect())
}

/// Share of `n_eval` fresh brackets from `model` contained in the rule's set.
pub fn coverage(rule: &PredictionRule, model: Model, n_eval: usize, seed: u64) -> Result<f64> {
    Ok(coverage_on(rule, &eval_points(model, n_eval, seed)?, None)?.bracket)
}

/// Trapezoidal integral of `volume(rule(x))` over the sorted 1-D points
/// `x_grid`. A single point gives the volume there.
pub fn integrated_volume(rule: &PredictionRule, x_grid: &[f64]) -> Result<f64> {
    if x_grid.is_empty() {
        return Err(Error::InvalidConfig("volume grid is empty".into()));
    }
    let vols = x_grid
        .iter()
        .map(|&x| rule.set_at(&[x]).map(|s| s.volume()))
        .collect::<Result<Vec<f64>>>()?;
    if vols.len() == 1 {
        return Ok(vols[0]);
    }
    Ok(x_grid
        .windows(2)
        .zip(vols.windows(2))
        .map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
        .sum())
}
