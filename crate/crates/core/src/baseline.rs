//! Polynomial quantile regression and the Bonferroni interval rule built on it.
//!
//! The pinball loss `Σ ρ_τ(y_i - p(x_i))` is piecewise linear and convex in
//! the coefficients, and some minimizer interpolates `p` observations
//! (`p` = number of coefficients). [`fit_pinball`] walks between such
//! interpolating fits: at each one it examines the `2p` edge directions that
//! release one interpolated point, follows the steepest descending edge to
//! the best breakpoint on it, and stops when no edge descends.
//!
//! Covariates are centered and scaled before the powers are formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conformal::{calibrate, split_indices, CalibrationResult};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::rule::{PredictionRule, RuleConfig};

const ZERO_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Lower,
    Upper,
}

/// A fitted additive polynomial quantile curve.
///
/// `coefficients[0]` is the intercept; then, for each covariate `j`, the
/// coefficients of `z_j^1 .. z_j^degree` with `z_j = (x_j - center_j) / scale_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub target: Target,
    pub level: f64,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub loss: f64,
}

impl QuantileFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        features(x, &self.center, &self.scale, self.degree)
            .iter()
            .zip(&self.coefficients)
            .map(|(f, c)| f * c)
            .sum()
    }

    /// Coefficients in the raw power basis: intercept, then `x_j^1 ..
    /// x_j^degree` for each covariate.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let d = self.center.len();
        let deg = self.degree;
        let mut out = vec![0.0; 1 + d * deg];
        out[0] = self.coefficients[0];
        for j in 0..d {
            let (c, s) = (self.center[j], self.scale[j]);
            for k in 1..=deg {
                let b = self.coefficients[1 + j * deg + (k - 1)] / s.powi(k as i32);
                // b (x - c)^k = b Σ_i C(k,i) x^i (-c)^(k-i)
                let mut binom = 1.0;
                for i in 0..=k {
                    let term = b * binom * (-c).powi((k - i) as i32);
                    if i == 0 {
                        out[0] += term;
                    } else {
                        out[1 + j * deg + (i - 1)] += term;
                    }
                    binom = binom * (k - i) as f64 / (i + 1) as f64;
                }
            }
        }
        out
    }
}

fn features(x: &[f64], center: &[f64], scale: &[f64], degree: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(1 + x.len() * degree);
    f.push(1.0);
    for ((v, c), s) in x.iter().zip(center).zip(scale) {
        let z = (v - c) / s;
        let mut p = 1.0;
        for _ in 0..degree {
            p *= z;
            f.push(p);
        }
    }
    f
}

pub fn pinball_loss(residuals: &[f64], level: f64) -> f64 {
    residuals
        .iter()
        .map(|&r| if r >= 0.0 { level * r } else { (level - 1.0) * r })
        .sum()
}

/// Directional derivative of `ρ_τ` at zero along `v`.
fn rho_dir(v: f64, level: f64) -> f64 {
    if v >= 0.0 {
        level * v
    } else {
        (level - 1.0) * v
    }
}

/// The `⌈n·level⌉`-th smallest value, which minimizes the pinball loss.
pub fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((v.len() as f64 * level) - 1e-9).ceil().max(1.0) as usize;
    v[k.min(v.len()) - 1]
}

struct Design {
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    p: usize,
}

impl Design {
    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.y)
            .map(|(r, y)| y - r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn basis_inverse(&self, basis: &[usize]) -> Option<DMatrix<f64>> {
        let p = self.p;
        let m = DMatrix::from_fn(p, p, |i, j| self.rows[basis[i]][j]);
        m.try_inverse()
    }

    fn interpolate(&self, basis: &[usize], inv: &DMatrix<f64>) -> Vec<f64> {
        let yb = DVector::from_iterator(self.p, basis.iter().map(|&i| self.y[i]));
        (inv * yb).iter().copied().collect()
    }
}

/// A starting basis: the level-quantile observation within each of `p`
/// equal-count slices of the sample ordered by the first covariate.
fn initial_basis(design: &Design, xs: &[f64], level: f64) -> Option<Vec<usize>> {
    let n = design.y.len();
    let p = design.p;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(p);
    for s in 0..p {
        let slice = &order[s * n / p..(s + 1) * n / p];
        let mut by_y: Vec<usize> = slice.to_vec();
        by_y.sort_by(|&a, &b| design.y[a].total_cmp(&design.y[b]).then(a.cmp(&b)));
        let k = ((by_y.len() as f64 * level).ceil() as usize).clamp(1, by_y.len());
        basis.push(by_y[k - 1]);
    }
    if design.basis_inverse(&basis).is_some() {
        return Some(basis);
    }
    // Fall back to evenly spaced observations along the first covariate.
    for offset in 0..n / p {
        let basis: Vec<usize> = (0..p).map(|s| order[s * n / p + offset]).collect();
        if design.basis_inverse(&basis).is_some() {
            return Some(basis);
        }
    }
    None
}

fn descend(design: &Design, mut basis: Vec<usize>, level: f64) -> Result<Vec<f64>> {
    let n = design.y.len();
    let p = design.p;
    let max_iter = 20 * n + 1000;
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }
    let mut inv = design
        .basis_inverse(&basis)
        .ok_or_else(|| Error::DegenerateDesign("singular starting basis".into()))?;
    let mut beta = design.interpolate(&basis, &inv);
    for _ in 0..max_iter {
        let r = design.residuals(&beta);
        // Steepest descending edge.
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..p {
            let dj: Vec<f64> = inv.column(j).iter().copied().collect();
            for s in [1.0, -1.0] {
                let mut deriv = rho_dir(-s, level);
                for i in (0..n).filter(|&i| !in_basis[i]) {
                    let a = s * design.rows[i].iter().zip(&dj).map(|(x, d)| x * d).sum::<f64>();
                    if r[i].abs() <= ZERO_RESIDUAL {
                        deriv += rho_dir(-a, level);
                    } else if r[i] > 0.0 {
                        deriv -= level * a;
                    } else {
                        deriv -= (level - 1.0) * a;
                    }
                }
                if deriv < -1e-12 && best.is_none_or(|(d, _, _)| deriv < d) {
                    best = Some((deriv, j, s));
                }
            }
        }
        let Some((deriv, j, s)) = best else {
            return Ok(beta);
        };
        // Line search over breakpoints along the chosen edge.
        let dj: Vec<f64> = inv.column(j).iter().map(|d| s * d).collect();
        let mut kinks: Vec<(f64, f64, usize)> = (0..n)
            .filter(|&i| !in_basis[i] && r[i].abs() > ZERO_RESIDUAL)
            .filter_map(|i| {
                let a: f64 = design.rows[i].iter().zip(&dj).map(|(x, d)| x * d).sum();
                let t = r[i] / a;
                (a != 0.0 && t > 0.0).then_some((t, a.abs(), i))
            })
            .collect();
        if kinks.is_empty() {
            return Err(Error::DegenerateDesign("pinball loss is unbounded below".into()));
        }
        kinks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
        let mut slope = deriv;
        let mut enter = kinks[0];
        for &k in &kinks {
            slope += k.1;
            enter = k;
            if slope >= 0.0 {
                break;
            }
        }
        let (t, _, i_new) = enter;
        let leaving = basis[j];
        let mut new_basis = basis.clone();
        new_basis[j] = i_new;
        let Some(new_inv) = design.basis_inverse(&new_basis) else {
            // Numerically singular swap: take the step without changing basis.
            for (b, d) in beta.iter_mut().zip(&dj) {
                *b += t * d;
            }
            return Ok(beta);
        };
        in_basis[leaving] = false;
        in_basis[i_new] = true;
        basis = new_basis;
        inv = new_inv;
        beta = design.interpolate(&basis, &inv);
    }
    Ok(beta)
}

/// Fit a degree-`degree` additive polynomial to the `level` quantile of the
/// lower or upper bracket endpoint.
pub fn fit_pinball(data: &Dataset, target: Target, level: f64, degree: usize) -> Result<QuantileFit> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {level}")));
    }
    let n = data.len();
    let d = data.dim();
    let p = 1 + d * degree;
    if n <= p {
        return Err(Error::TooFewObservations {
            required: p + 1,
            found: n,
        });
    }
    let y: Vec<f64> = data
        .iter()
        .map(|o| match target {
            Target::Lower => o.y_lo,
            Target::Upper => o.y_hi,
        })
        .collect();
    let mut center = Vec::with_capacity(d);
    let mut scale = Vec::with_capacity(d);
    for j in 0..d {
        let col = data.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if degree >= 1 && !(sd > 0.0) {
            return Err(Error::DegenerateDesign(format!(
                "covariate {j} is constant; degree {degree} is not identifiable"
            )));
        }
        center.push(mean);
        scale.push(if sd > 0.0 { sd } else { 1.0 });
    }

    let coefficients = if degree == 0 {
        vec![empirical_quantile(&y, level)]
    } else {
        let design = Design {
            rows: data.iter().map(|o| features(&o.x, &center, &scale, degree)).collect(),
            y: y.clone(),
            p,
        };
        let basis = initial_basis(&design, &data.column(0), level).ok_or_else(|| {
            Error::DegenerateDesign(format!(
                "fewer than {p} distinct covariate values for degree {degree}"
            ))
        })?;
        descend(&design, basis, level)?
    };
    let mut fit = QuantileFit {
        target,
        level,
        degree,
        coefficients,
        center,
        scale,
        loss: 0.0,
    };
    let residuals: Vec<f64> = data
        .iter()
        .zip(&y)
        .map(|(o, yi)| yi - fit.predict(&o.x))
        .collect();
    fit.loss = pinball_loss(&residuals, level);
    Ok(fit)
}

/// The Bonferroni rule `[q_lo(α/2), q_hi(1-α/2)]` on a grid, with the fits
/// and the number of grid points where the curves crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRule {
    pub rule: PredictionRule,
    pub lower: QuantileFit,
    pub upper: QuantileFit,
    pub crossings: usize,
}

/// Fit both quantile curves and tabulate the interval on `grid`. Where the
/// upper curve falls below the lower one the interval collapses to their
/// midpoint.
pub fn quantile_rule(data: &Dataset, grid: &[Vec<f64>], alpha: f64, degree: usize) -> Result<QuantileRule> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let lower = fit_pinball(data, Target::Lower, alpha / 2.0, degree)?;
    let upper = fit_pinball(data, Target::Upper, 1.0 - alpha / 2.0, degree)?;
    let mut crossings = 0;
    let sets = grid
        .iter()
        .map(|x| {
            let (lo, hi) = (lower.predict(x), upper.predict(x));
            let pair = if hi < lo {
                crossings += 1;
                let mid = 0.5 * (lo + hi);
                (mid, mid)
            } else {
                (lo, hi)
            };
            IntervalUnion::from_pairs(&[pair])
        })
        .collect::<Result<Vec<_>>>()?;
    let config = RuleConfig {
        method: format!("quantile-q{degree}"),
        alpha: Some(alpha),
        degree: Some(degree),
        train_size: Some(data.len()),
        ..RuleConfig::default()
    };
    let rule = PredictionRule::new(grid.to_vec(), sets, vec![false; grid.len()], config)?;
    Ok(QuantileRule {
        rule,
        lower,
        upper,
        crossings,
    })
}

/// Split, fit the quantile rule on the training share, and calibrate it with
/// the interval score on the rest.
pub fn conformalize_quantile_rule(
    data: &Dataset,
    grid: &[Vec<f64>],
    alpha: f64,
    degree: usize,
    split_frac: f64,
    seed: u64,
) -> Result<(PredictionRule, CalibrationResult, QuantileRule)> {
    let (train_idx, calib_idx) = split_indices(data.len(), split_frac, seed)?;
    let train = data.subset(&train_idx)?;
    let calib = data.subset(&calib_idx)?;
    let fitted = quantile_rule(&train, grid, alpha, degree)?;
    let (mut rule, mut result) = calibrate(&fitted.rule, &calib, alpha)?;
    rule.config.seed = Some(seed);
    result.seed = Some(seed);
    result.train_indices = train_idx;
    result.calib_indices = calib_idx;
    Ok((rule, result, fitted))
}
