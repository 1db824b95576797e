//! Kernel-weighted estimate of the conditional containment probability
//! `P([Y_lo, Y_hi] ⊂ C | X = x)` for a union of intervals `C`.
//!
//! The estimator is a Nadaraya–Watson ratio with a product kernel: each
//! training bracket contributes its normalized kernel weight when it sits
//! inside one component of `C`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

/// Default multiplier of the rule-of-thumb bandwidth.
pub const DEFAULT_BANDWIDTH_SCALE: f64 = 1.5;

/// `1 / ∫_{-3}^{3} φ(t) dt`, normalizing the truncated Gaussian.
const TRUNCATED_GAUSSIAN_NORM: f64 = 0.400_022_258_921_284_85;
const TRUNCATED_GAUSSIAN_SUPPORT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[default]
    Epanechnikov,
    Uniform,
    /// Standard normal density truncated to `[-3, 3]` and renormalized.
    GaussianTruncated,
}

impl KernelFamily {
    /// Univariate kernel `K0(t)`; each family integrates to one.
    pub fn k0(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - t * t)
                } else {
                    0.0
                }
            }
            KernelFamily::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelFamily::GaussianTruncated => {
                if a <= TRUNCATED_GAUSSIAN_SUPPORT {
                    TRUNCATED_GAUSSIAN_NORM * (-0.5 * t * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support in standardized units.
    pub fn support(self) -> f64 {
        match self {
            KernelFamily::Epanechnikov | KernelFamily::Uniform => 1.0,
            KernelFamily::GaussianTruncated => TRUNCATED_GAUSSIAN_SUPPORT,
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "uniform" => Ok(Self::Uniform),
            "gaussian-truncated" => Ok(Self::GaussianTruncated),
            other => Err(Error::InvalidConfig(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Product kernel with one bandwidth per covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: Vec<f64>) -> Result<Self> {
        let spec = Self { family, bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.bandwidth.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive and finite, got {h}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.len()
    }

    /// `∏_j h_j`.
    pub fn bandwidth_volume(&self) -> f64 {
        self.bandwidth.iter().product()
    }

    /// Unnormalized kernel weight `K((x - xi) / h)`.
    fn weight(&self, x: &[f64], xi: &[f64]) -> f64 {
        let mut k = 1.0;
        for ((a, b), h) in x.iter().zip(xi).zip(&self.bandwidth) {
            k *= self.family.k0((a - b) / h);
            if k == 0.0 {
                break;
            }
        }
        k
    }
}

/// Product kernel `∏_j K0(u_j)` at a standardized offset `u`.
pub fn kernel_value(spec: &KernelSpec, u: &[f64]) -> Result<f64> {
    if u.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: u.len(),
        });
    }
    Ok(u.iter().map(|&t| spec.family.k0(t)).product())
}

/// Normalized kernel weights over the training sample at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Set when every raw kernel value is zero; `weights` is then all zero.
    pub empty_neighborhood: bool,
}

impl WeightVector {
    /// Indices and weights of the observations with positive weight.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, *w))
    }
}

pub fn weights_at(data: &Dataset, x: &[f64], spec: &KernelSpec) -> Result<WeightVector> {
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: x.len(),
        });
    }
    if spec.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: spec.dim(),
        });
    }
    let mut weights: Vec<f64> = data.iter().map(|o| spec.weight(x, &o.x)).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
        Ok(WeightVector {
            weights,
            empty_neighborhood: false,
        })
    } else {
        weights.iter_mut().for_each(|w| *w = 0.0);
        Ok(WeightVector {
            weights,
            empty_neighborhood: true,
        })
    }
}

/// Kernel estimate of `P([Y_lo, Y_hi] ⊂ C | X = x)`.
pub fn containment_prob(
    data: &Dataset,
    c: &IntervalUnion,
    x: &[f64],
    spec: &KernelSpec,
) -> Result<f64> {
    let wv = weights_at(data, x, spec)?;
    if wv.empty_neighborhood {
        return Err(Error::EmptyNeighborhood);
    }
    let obs = data.observations();
    let p = wv
        .support()
        .filter(|(i, _)| c.contains_bracket(obs[*i].y_lo, obs[*i].y_hi))
        .map(|(_, w)| w)
        .sum::<f64>();
    Ok(p.min(1.0))
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Rule-of-thumb bandwidth `h_j = scale · sd(X_j) · n^(-1/(4+d))`.
///
/// A covariate with zero spread gets `h_j = 1`.
pub fn bandwidth_rule(data: &Dataset, scale: f64, family: KernelFamily) -> Result<KernelSpec> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewObservations { required: 2, found: n });
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth scale must be positive, got {scale}"
        )));
    }
    let d = data.dim() as f64;
    let rate = (n as f64).powf(-1.0 / (4.0 + d));
    let bandwidth = (0..data.dim())
        .map(|j| {
            let sd = sample_sd(&data.column(j));
            if sd > 0.0 && sd.is_finite() {
                scale * sd * rate
            } else {
                1.0
            }
        })
        .collect();
    KernelSpec::new(family, bandwidth)
}

/// [`bandwidth_rule`] with the Epanechnikov kernel and scale 1.5.
pub fn default_bandwidth(data: &Dataset) -> Result<KernelSpec> {
    bandwidth_rule(data, DEFAULT_BANDWIDTH_SCALE, KernelFamily::Epanechnikov)
}
