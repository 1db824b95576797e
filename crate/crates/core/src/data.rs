use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed unit: covariates plus the bracket `[y_lo, y_hi]` known to
/// contain the latent outcome. Exact outcomes have `y_lo == y_hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(y_lo <= y_hi) || !y_lo.is_finite() || !y_hi.is_finite() {
            return Err(Error::MalformedInterval { lo: y_lo, hi: y_hi });
        }
        Ok(Self { x, y_lo, y_hi })
    }

    pub fn width(&self) -> f64 {
        self.y_hi - self.y_lo
    }
}

/// A nonempty sample of observations sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations.first().ok_or(Error::EmptyDataset)?;
        let dim = first.x.len();
        for obs in &observations {
            if obs.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: obs.x.len(),
                });
            }
            if !(obs.y_lo <= obs.y_hi) {
                return Err(Error::MalformedInterval {
                    lo: obs.y_lo,
                    hi: obs.y_hi,
                });
            }
        }
        Ok(Self { dim, observations })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.observations[i].clone()).collect())
    }

    /// Covariate column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.observations.iter().map(|o| o.x[j]).collect()
    }

    /// Per-dimension `(min, max)` of the covariates.
    pub fn covariate_range(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|j| {
                self.observations.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), o| (lo.min(o.x[j]), hi.max(o.x[j])),
                )
            })
            .collect()
    }

    /// Replace every bracket by the zero-width bracket at its midpoint.
    ///
    /// This is the naive point-imputation baseline; it discards the
    /// bracket information and has no coverage guarantee for the latent
    /// outcome.
    pub fn impute_midpoint(&self) -> Self {
        let observations = self
            .observations
            .iter()
            .map(|o| {
                let mid = 0.5 * (o.y_lo + o.y_hi);
                Observation {
                    x: o.x.clone(),
                    y_lo: mid,
                    y_hi: mid,
                }
            })
            .collect();
        Self {
            dim: self.dim,
            observations,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        let censored = self.observations.iter().filter(|o| o.y_lo < o.y_hi).count();
        censored as f64 / self.len() as f64
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;
    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}
