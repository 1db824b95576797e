use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};

/// Covariate support of Models A, B and C.
pub const X_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    A,
    B,
    C,
    #[serde(rename = "example1")]
    Example1,
}

impl Model {
    pub fn code(self) -> u64 {
        match self {
            Model::A => 1,
            Model::B => 2,
            Model::C => 3,
            Model::Example1 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::A => "A",
            Model::B => "B",
            Model::C => "C",
            Model::Example1 => "example1",
        }
    }

    /// Covariate range the model draws from; a single point for the
    /// covariate-free design.
    pub fn x_range(self) -> (f64, f64) {
        match self {
            Model::Example1 => (0.0, 0.0),
            _ => X_RANGE,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Model::A),
            "B" | "b" => Ok(Model::B),
            "C" | "c" => Ok(Model::C),
            "example1" | "example-1" => Ok(Model::Example1),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub n: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewObservations {
                required: 2,
                found: self.n,
            });
        }
        Ok(())
    }
}

/// A simulated sample with the latent outcomes kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub data: Dataset,
    pub latent: Vec<f64>,
}

/// `2 (x - 1)^2 (x + 1)`.
pub fn mean_fn(x: f64) -> f64 {
    2.0 * (x - 1.0).powi(2) * (x + 1.0)
}

/// Half the separation of the two mixture modes, `4 sqrt((x + 0.5)_+)`.
pub fn split_fn(x: f64) -> f64 {
    if x >= -0.5 {
        4.0 * (x + 0.5).sqrt()
    } else {
        0.0
    }
}

/// Mixture component variance `1/4 + |x|`.
pub fn variance_fn(x: f64) -> f64 {
    0.25 + x.abs()
}

fn mixture_outcome(x: f64, rng: &mut ChaCha8Rng) -> f64 {
    let upper = rng.random_bool(0.5);
    let centre = if upper {
        mean_fn(x) + split_fn(x)
    } else {
        mean_fn(x) - split_fn(x)
    };
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    centre + variance_fn(x).sqrt() * z
}

/// Floor brackets for a random 20% of outcomes, exact values otherwise.
fn fixed_censoring(y: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    if rng.random_bool(0.2) {
        let lo = y.floor();
        (lo, lo + 1.0)
    } else {
        (y, y)
    }
}

fn build(rows: Vec<(f64, f64, f64, f64)>) -> Result<SimData> {
    let latent = rows.iter().map(|r| r.3).collect();
    let obs = rows
        .into_iter()
        .map(|(x, lo, hi, _)| Observation::new(vec![x], lo, hi))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimData {
        data: Dataset::new(obs)?,
        latent,
    })
}

fn draw_x(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(X_RANGE.0..=X_RANGE.1)
}

/// Mixture outcome with half-normal noise added below and above.
pub fn gen_model_a(n: usize, seed: u64) -> Result<SimData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let rows = (0..n)
        .map(|_| {
            let x = draw_x(&mut rng);
            let y = mixture_outcome(x, &mut rng);
            let e1: f64 = normal.sample(&mut rng);
            let e2: f64 = normal.sample(&mut rng);
            (x, y - e1.abs(), y + e2.abs(), y)
        })
        .collect();
    build(rows)
}

/// Mixture outcome with unit floor brackets on a random 20%.
pub fn gen_model_b(n: usize, seed: u64) -> Result<SimData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let x = draw_x(&mut rng);
            let y = mixture_outcome(x, &mut rng);
            let (lo, hi) = fixed_censoring(y, &mut rng);
            (x, lo, hi, y)
        })
        .collect();
    build(rows)
}

/// `f(x)` plus chi-square(1.5) noise, with unit floor brackets on a random
/// 20%.
pub fn gen_model_c(n: usize, seed: u64) -> Result<SimData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi2 = Gamma::new(0.75, 2.0).expect("valid gamma parameters");
    let rows = (0..n)
        .map(|_| {
            let x = draw_x(&mut rng);
            let y = mean_fn(x) + chi2.sample(&mut rng);
            let (lo, hi) = fixed_censoring(y, &mut rng);
            (x, lo, hi, y)
        })
        .collect();
    build(rows)
}

/// Brackets `(0, 1)` or `(0, 2)` with equal probability and a constant
/// covariate `x = 0`. The latent outcome is drawn uniformly in the bracket.
pub fn gen_example1(n: usize, seed: u64) -> Result<SimData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let hi = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            let y = rng.random_range(0.0..hi);
            (0.0, 0.0, hi, y)
        })
        .collect();
    build(rows)
}

pub fn generate(model: Model, n: usize, seed: u64) -> Result<SimData> {
    match model {
        Model::A => gen_model_a(n, seed),
        Model::B => gen_model_b(n, seed),
        Model::C => gen_model_c(n, seed),
        Model::Example1 => gen_example1(n, seed),
    }
}

pub fn generate_spec(spec: &ModelSpec) -> Result<SimData> {
    spec.validate()?;
    generate(spec.model, spec.n, spec.seed)
}
