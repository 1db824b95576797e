//! Prediction rules: a map `x ↦ IntervalUnion` stored on a covariate grid.
//!
//! A query point is answered by its nearest grid point (Euclidean distance
//! after dividing each coordinate by the grid's extent in that dimension;
//! ties go to the lower index). Locally calibrated rules additionally carry
//! a partition and one inflation per cell, applied at the query point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::KernelSpec;
use crate::interval::IntervalUnion;
use crate::serde_inf;
use crate::solver::SolverConfig;

/// An axis-aligned box `lo <= x < hi`; dimensions flagged in `closed_hi`
/// also include their upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub closed_hi: Vec<bool>,
}

impl Cell {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| {
            self.lo[j] <= v && (v < self.hi[j] || (self.closed_hi[j] && v == self.hi[j]))
        })
    }
}

/// A partition of the covariate space into disjoint axis-aligned cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    cells: Vec<Cell>,
}

impl Partition {
    /// Validate that cells are well formed and pairwise disjoint.
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidConfig("partition has no cells".into()));
        }
        let d = cells[0].lo.len();
        for c in &cells {
            if c.lo.len() != d || c.hi.len() != d || c.closed_hi.len() != d {
                return Err(Error::InvalidConfig("partition cells differ in dimension".into()));
            }
            if c.lo.iter().zip(&c.hi).any(|(a, b)| !(a < b)) {
                return Err(Error::InvalidConfig(format!(
                    "partition cell has empty side: lo {:?} hi {:?}",
                    c.lo, c.hi
                )));
            }
        }
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                let overlap = (0..d).all(|j| a.lo[j] < b.hi[j] && b.lo[j] < a.hi[j]);
                if overlap {
                    return Err(Error::InvalidConfig(format!(
                        "partition cells overlap: {:?}..{:?} and {:?}..{:?}",
                        a.lo, a.hi, b.lo, b.hi
                    )));
                }
            }
        }
        Ok(Self { cells })
    }

    /// Product of equal-width bins over the box `[lo, hi]`.
    pub fn equal_width(lo: &[f64], hi: &[f64], bins: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != bins.len() {
            return Err(Error::InvalidConfig(
                "partition lo, hi and bins must have equal length".into(),
            ));
        }
        if bins.iter().any(|&b| b == 0) {
            return Err(Error::InvalidConfig("partition needs at least one bin per dimension".into()));
        }
        let d = lo.len();
        let total: usize = bins.iter().product();
        let mut cells = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut c_lo = Vec::with_capacity(d);
            let mut c_hi = Vec::with_capacity(d);
            let mut closed = Vec::with_capacity(d);
            for j in 0..d {
                let k = rem % bins[j];
                rem /= bins[j];
                let width = (hi[j] - lo[j]) / bins[j] as f64;
                c_lo.push(lo[j] + k as f64 * width);
                let last = k + 1 == bins[j];
                c_hi.push(if last { hi[j] } else { lo[j] + (k + 1) as f64 * width });
                closed.push(last);
            }
            cells.push(Cell {
                lo: c_lo,
                hi: c_hi,
                closed_hi: closed,
            });
        }
        Self::new(cells)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, x: &[f64]) -> Result<usize> {
        self.cells
            .iter()
            .position(|c| c.contains(x))
            .ok_or_else(|| Error::OutsidePartition(x.to_vec()))
    }
}

/// Per-cell inflation applied on top of the grid sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAdjust {
    pub partition: Partition,
    #[serde(with = "serde_inf::vec")]
    pub thresholds: Vec<f64>,
}

/// How a rule was produced; carried into serialized artifacts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleConfig {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(default, with = "serde_inf::option", skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    /// Per-endpoint widening `(w_lo_1, w_hi_1, w_lo_2, ...)` of a
    /// differentially adjusted rule.
    #[serde(default, with = "serde_inf::vec", skip_serializing_if = "Vec::is_empty")]
    pub endpoint_adjustment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRule {
    pub grid: Vec<Vec<f64>>,
    pub sets: Vec<IntervalUnion>,
    pub undefined: Vec<bool>,
    pub scale: Vec<f64>,
    pub config: RuleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<LocalAdjust>,
}

impl PredictionRule {
    pub fn new(
        grid: Vec<Vec<f64>>,
        sets: Vec<IntervalUnion>,
        undefined: Vec<bool>,
        config: RuleConfig,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidConfig("prediction rule grid is empty".into()));
        }
        if sets.len() != grid.len() || undefined.len() != grid.len() {
            return Err(Error::InvalidConfig(
                "grid, sets and undefined mask must have equal length".into(),
            ));
        }
        let d = grid[0].len();
        if let Some(p) = grid.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        let scale = (0..d)
            .map(|j| {
                let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                    (a.min(p[j]), b.max(p[j]))
                });
                if hi > lo {
                    hi - lo
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            grid,
            sets,
            undefined,
            scale,
            config,
            local: None,
        })
    }

    /// A rule returning `set` everywhere on `grid`.
    pub fn constant(grid: Vec<Vec<f64>>, set: IntervalUnion, config: RuleConfig) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![set; n], vec![false; n], config)
    }

    pub fn dim(&self) -> usize {
        self.grid[0].len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn nearest(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.grid.iter().enumerate() {
            let d: f64 = p
                .iter()
                .zip(x)
                .zip(&self.scale)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }

    /// The fitted set at the nearest grid point, before any local inflation.
    pub fn base_set_at(&self, x: &[f64]) -> Result<&IntervalUnion> {
        let i = self.nearest(x)?;
        if self.undefined[i] {
            return Err(Error::UndefinedAt { index: i });
        }
        Ok(&self.sets[i])
    }

    /// The prediction set at `x`.
    pub fn set_at(&self, x: &[f64]) -> Result<IntervalUnion> {
        let base = self.base_set_at(x)?;
        match &self.local {
            None => Ok(base.clone()),
            Some(local) => {
                let k = local.partition.cell_of(x)?;
                Ok(base.inflate(local.thresholds[k]))
            }
        }
    }

    /// Inflate every grid set by `theta` on both sides.
    pub fn inflate(&self, theta: f64) -> PredictionRule {
        let mut out = self.clone();
        out.sets = self.sets.iter().map(|s| s.inflate(theta)).collect();
        out
    }

    pub fn defined_count(&self) -> usize {
        self.undefined.iter().filter(|u| !**u).count()
    }

    /// Largest component count over defined grid points.
    pub fn max_components(&self) -> usize {
        self.sets
            .iter()
            .zip(&self.undefined)
            .filter(|(_, u)| !**u)
            .map(|(s, _)| s.len())
            .max()
            .unwrap_or(0)
    }
}

/// `n` equispaced points on `[lo, hi]`, as 1-D grid points.
pub fn linspace_grid(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![],
        1 => vec![vec![0.5 * (lo + hi)]],
        _ => (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
            .collect(),
    }
}

/// Cartesian product of per-dimension equispaced points.
pub fn product_grid(lo: &[f64], hi: &[f64], points: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .zip(points)
        .map(|((&a, &b), &n)| linspace_grid(a, b, n).into_iter().map(|p| p[0]).collect())
        .collect();
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}
