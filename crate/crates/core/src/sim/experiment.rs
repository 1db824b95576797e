use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::eval::{coverage_on, eval_points, integrated_volume};
use super::models::{generate, Model};
use crate::baseline::quantile_rule;
use crate::conformal::{calibrate, calibrate_local, differential_adjust, split_indices};
use crate::error::{Error, Result};
use crate::estimator::{bandwidth_rule, KernelFamily, KernelSpec};
use crate::rule::{linspace_grid, Partition, PredictionRule};
use crate::solver::{auto_psi, fit_prediction_rule, SolverConfig};

/// Prediction-set constructions compared by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Kernel min-union set, split-conformal calibrated.
    MinUnion,
    /// Kernel min-union set, calibrated per partition cell.
    Local,
    /// Bonferroni polynomial quantile interval of the given degree,
    /// split-conformal calibrated.
    Quantile(usize),
    /// Kernel min-union set with per-endpoint adjustment.
    Differential,
}

impl Method {
    fn uses_kernel_fit(self) -> bool {
        !matches!(self, Method::Quantile(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::MinUnion => f.write_str("min-union"),
            Method::Local => f.write_str("local"),
            Method::Quantile(d) => write!(f, "q{d}"),
            Method::Differential => f.write_str("differential"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-union" => Ok(Method::MinUnion),
            "local" => Ok(Method::Local),
            "differential" => Ok(Method::Differential),
            _ => s
                .strip_prefix('q')
                .and_then(|d| d.parse().ok())
                .map(Method::Quantile)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Slack `ψ`: a fixed value or the bandwidth-driven default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiSpec {
    Fixed(f64),
    Auto,
}

impl PsiSpec {
    pub fn resolve(self, n_train: usize, spec: &KernelSpec) -> f64 {
        match self {
            PsiSpec::Fixed(v) => v,
            PsiSpec::Auto => auto_psi(n_train, spec),
        }
    }
}

impl Serialize for PsiSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PsiSpec::Fixed(v) => s.serialize_f64(*v),
            PsiSpec::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for PsiSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = PsiSpec;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or \"auto\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<PsiSpec, E> {
                Ok(PsiSpec::Fixed(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<PsiSpec, E> {
                Ok(PsiSpec::Fixed(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<PsiSpec, E> {
                Ok(PsiSpec::Fixed(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<PsiSpec, E> {
                if v == "auto" {
                    Ok(PsiSpec::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<Model>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
    pub split_frac: f64,
    pub n_eval: usize,
    pub fit_grid_points: usize,
    pub eval_grid_points: usize,
    pub kernel: KernelFamily,
    pub bandwidth_scale: f64,
    pub psi: PsiSpec,
    pub max_components: usize,
    pub weight_grid: f64,
    pub min_component_weight: f64,
    pub local_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![Model::A, Model::B, Model::C],
            methods: vec![
                Method::MinUnion,
                Method::Local,
                Method::Quantile(2),
                Method::Quantile(3),
            ],
            reps: 100,
            seed: 20_240_501,
            n: 2500,
            alpha: 0.1,
            split_frac: 0.75,
            n_eval: 5000,
            fit_grid_points: 61,
            eval_grid_points: 61,
            kernel: KernelFamily::Epanechnikov,
            bandwidth_scale: 1.5,
            psi: PsiSpec::Fixed(0.0),
            max_components: 2,
            weight_grid: 1e-4,
            min_component_weight: 0.05,
            local_bins: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("experiment needs at least one model and one method".into()));
        }
        if self.reps == 0 || self.n_eval == 0 {
            return Err(Error::InvalidConfig("reps and n_eval must be positive".into()));
        }
        if self.n < 4 {
            return Err(Error::TooFewObservations { required: 4, found: self.n });
        }
        if self.fit_grid_points == 0 || self.eval_grid_points == 0 || self.local_bins == 0 {
            return Err(Error::InvalidConfig("grid sizes and bin count must be positive".into()));
        }
        if !(self.bandwidth_scale > 0.0) {
            return Err(Error::InvalidConfig("bandwidth_scale must be positive".into()));
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return Err(Error::InvalidConfig("methods must be distinct".into()));
        }
        split_indices(self.n, self.split_frac, 0)?;
        self.solver(0.0).validate()
    }

    pub fn solver(&self, psi: f64) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            psi,
            max_components: self.max_components,
            weight_grid: self.weight_grid,
            min_component_weight: self.min_component_weight,
        }
    }

    pub fn fit_grid(&self, model: Model) -> Vec<Vec<f64>> {
        let (lo, hi) = model.x_range();
        if lo == hi {
            vec![vec![lo]]
        } else {
            linspace_grid(lo, hi, self.fit_grid_points)
        }
    }

    pub fn eval_grid(&self, model: Model) -> Vec<f64> {
        let (lo, hi) = model.x_range();
        if lo == hi {
            vec![lo]
        } else {
            linspace_grid(lo, hi, self.eval_grid_points)
                .into_iter()
                .map(|p| p[0])
                .collect()
        }
    }

    pub fn partition(&self, model: Model) -> Result<Partition> {
        let (lo, hi) = model.x_range();
        if lo == hi {
            Partition::equal_width(&[lo - 0.5], &[hi + 0.5], &[1])
        } else {
            Partition::equal_width(&[lo], &[hi], &[self.local_bins])
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of one replication, derived from the master seed, the model and the
/// replication index only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepSeeds {
    pub data: u64,
    pub split: u64,
    pub eval: u64,
}

impl RepSeeds {
    pub fn derive(master: u64, model: Model, rep: usize) -> Self {
        let base = splitmix64(splitmix64(master ^ model.code().wrapping_mul(0xA24B_AED4_963E_E407)) ^ rep as u64);
        Self {
            data: splitmix64(base ^ 1),
            split: splitmix64(base ^ 2),
            eval: splitmix64(base ^ 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub model: Model,
    pub method: Method,
    pub rep: usize,
    pub seeds: RepSeeds,
    pub n_train: usize,
    pub n_calib: usize,
    pub coverage: f64,
    pub latent_coverage: f64,
    pub volume: f64,
    /// Calibration threshold; `None` for per-cell calibration.
    pub threshold: Option<f64>,
    pub bandwidth: Option<f64>,
    pub psi: Option<f64>,
    pub max_components: usize,
    pub undefined_points: usize,
    pub bin_coverage: Vec<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub model: Model,
    pub method: Method,
    pub reps: usize,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub latent_coverage_mean: f64,
    pub volume_mean: f64,
    pub volume_sd: f64,
    pub bin_coverage_mean: Vec<f64>,
    pub elapsed_ms_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<RepRecord>,
    pub summary: Vec<MethodSummary>,
    pub wall_ms: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn evaluate(
    rule: &PredictionRule,
    points: &[(Vec<f64>, f64, f64, f64)],
    partition: &Partition,
    eval_grid: &[f64],
) -> Result<(f64, f64, f64, Vec<f64>)> {
    let stats = coverage_on(rule, points, Some(partition))?;
    let volume = integrated_volume(rule, eval_grid)?;
    let bins = stats.per_cell.iter().map(|c| c.bracket).collect();
    Ok((stats.bracket, stats.latent, volume, bins))
}

/// One replication of every configured method on one model.
pub fn run_single(cfg: &ExperimentConfig, model: Model, rep: usize) -> Result<Vec<RepRecord>> {
    let seeds = RepSeeds::derive(cfg.seed, model, rep);
    let sim = generate(model, cfg.n, seeds.data)?;
    let (train_idx, calib_idx) = split_indices(cfg.n, cfg.split_frac, seeds.split)?;
    let train = sim.data.subset(&train_idx)?;
    let calib = sim.data.subset(&calib_idx)?;
    let points = eval_points(model, cfg.n_eval, seeds.eval)?;
    let partition = cfg.partition(model)?;
    let fit_grid = cfg.fit_grid(model);
    let eval_grid = cfg.eval_grid(model);

    let kernel_fit = if cfg.methods.iter().any(|m| m.uses_kernel_fit()) {
        let start = Instant::now();
        let spec = bandwidth_rule(&train, cfg.bandwidth_scale, cfg.kernel)?;
        let psi = cfg.psi.resolve(train.len(), &spec);
        let rule = fit_prediction_rule(&train, &fit_grid, &spec, &cfg.solver(psi))?;
        Some((rule, spec, psi, start.elapsed().as_secs_f64() * 1e3))
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let (rule, threshold, fitted_ms, bandwidth, psi, undefined) = match method {
            Method::Quantile(degree) => {
                let fit_start = Instant::now();
                let q = quantile_rule(&train, &fit_grid, cfg.alpha, degree)?;
                let fit_ms = fit_start.elapsed().as_secs_f64() * 1e3;
                let (rule, cal) = calibrate(&q.rule, &calib, cfg.alpha)?;
                (rule, Some(cal.threshold), fit_ms, None, None, 0)
            }
            _ => {
                let (fitted, spec, psi, fit_ms) = kernel_fit.as_ref().expect("kernel fit computed");
                let undefined = fitted.undefined.iter().filter(|u| **u).count();
                let (rule, threshold) = match method {
                    Method::MinUnion => {
                        let (rule, cal) = calibrate(fitted, &calib, cfg.alpha)?;
                        (rule, Some(cal.threshold))
                    }
                    Method::Local => {
                        let (rule, _) = calibrate_local(fitted, &calib, &partition, cfg.alpha)?;
                        (rule, None)
                    }
                    Method::Differential => {
                        let res = differential_adjust(fitted, calib.observations(), cfg.alpha)?;
                        (res.rule, Some(res.symmetric_threshold))
                    }
                    Method::Quantile(_) => unreachable!(),
                };
                (rule, threshold, *fit_ms, Some(spec.bandwidth[0]), Some(*psi), undefined)
            }
        };
        let (coverage, latent, volume, bins) = evaluate(&rule, &points, &partition, &eval_grid)?;
        out.push(RepRecord {
            model,
            method,
            rep,
            seeds,
            n_train: train.len(),
            n_calib: calib.len(),
            coverage,
            latent_coverage: latent,
            volume,
            threshold,
            bandwidth,
            psi,
            max_components: rule.max_components(),
            undefined_points: undefined,
            bin_coverage: bins,
            elapsed_ms: fitted_ms + start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(out)
}

/// Run every (model, replication) pair in parallel and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let tasks: Vec<(Model, usize)> = cfg
        .models
        .iter()
        .flat_map(|&m| (0..cfg.reps).map(move |r| (m, r)))
        .collect();
    let results: Vec<Vec<RepRecord>> = tasks
        .par_iter()
        .map(|&(m, r)| run_single(cfg, m, r))
        .collect::<Result<_>>()?;
    let records: Vec<RepRecord> = results.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for &model in &cfg.models {
        for &method in &cfg.methods {
            let rs: Vec<&RepRecord> = records
                .iter()
                .filter(|r| r.model == model && r.method == method)
                .collect();
            let cov: Vec<f64> = rs.iter().map(|r| r.coverage).collect();
            let lat: Vec<f64> = rs.iter().map(|r| r.latent_coverage).collect();
            let vol: Vec<f64> = rs.iter().map(|r| r.volume).collect();
            let bins = rs.first().map_or(0, |r| r.bin_coverage.len());
            let bin_mean = (0..bins)
                .map(|k| {
                    let v: Vec<f64> = rs
                        .iter()
                        .map(|r| r.bin_coverage[k])
                        .filter(|c| !c.is_nan())
                        .collect();
                    if v.is_empty() {
                        f64::NAN
                    } else {
                        mean_sd(&v).0
                    }
                })
                .collect();
            let (coverage_mean, coverage_sd) = mean_sd(&cov);
            let (volume_mean, volume_sd) = mean_sd(&vol);
            summary.push(MethodSummary {
                model,
                method,
                reps: rs.len(),
                coverage_mean,
                coverage_sd,
                latent_coverage_mean: mean_sd(&lat).0,
                volume_mean,
                volume_sd,
                bin_coverage_mean: bin_mean,
                elapsed_ms_total: rs.iter().map(|r| r.elapsed_ms).sum(),
            });
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        summary,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ExperimentReport {
    /// One row per model × method × replication. Timings are left out so
    /// that identical configurations give identical files.
    pub fn write_records_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let bins = self.records.first().map_or(0, |r| r.bin_coverage.len());
        let mut header: Vec<String> = [
            "model", "method", "rep", "data_seed", "split_seed", "eval_seed", "n_train", "n_calib",
            "coverage", "latent_coverage", "volume", "threshold", "bandwidth", "psi",
            "max_components", "undefined_points",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..bins).map(|k| format!("bin{k}_coverage")));
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.model.to_string(),
                r.method.to_string(),
                r.rep.to_string(),
                r.seeds.data.to_string(),
                r.seeds.split.to_string(),
                r.seeds.eval.to_string(),
                r.n_train.to_string(),
                r.n_calib.to_string(),
                r.coverage.to_string(),
                r.latent_coverage.to_string(),
                r.volume.to_string(),
                fmt_opt(r.threshold),
                fmt_opt(r.bandwidth),
                fmt_opt(r.psi),
                r.max_components.to_string(),
                r.undefined_points.to_string(),
            ];
            row.extend(r.bin_coverage.iter().map(|c| c.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long format: one row per model × method × replication × metric.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "method", "rep", "metric", "bin", "value"])?;
        for r in &self.records {
            let base = [r.model.to_string(), r.method.to_string(), r.rep.to_string()];
            let mut emit = |metric: &str, bin: String, value: f64| {
                out.write_record([
                    base[0].as_str(),
                    base[1].as_str(),
                    base[2].as_str(),
                    metric,
                    bin.as_str(),
                    value.to_string().as_str(),
                ])
            };
            emit("coverage", String::new(), r.coverage)?;
            emit("latent_coverage", String::new(), r.latent_coverage)?;
            emit("volume", String::new(), r.volume)?;
            if let Some(t) = r.threshold {
                emit("threshold", String::new(), t)?;
            }
            for (k, c) in r.bin_coverage.iter().enumerate() {
                emit("bin_coverage", k.to_string(), *c)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a ExperimentConfig,
            summary: &'a [MethodSummary],
            wall_ms: f64,
        }
        serde_json::to_writer_pretty(
            w,
            &Summary {
                config: &self.config,
                summary: &self.summary,
                wall_ms: self.wall_ms,
            },
        )?;
        Ok(())
    }

    /// Write `records.csv`, `long.csv` and `summary.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_records_csv(std::fs::File::create(dir.join("records.csv"))?)?;
        self.write_long_csv(std::fs::File::create(dir.join("long.csv"))?)?;
        self.write_summary_json(std::fs::File::create(dir.join("summary.json"))?)?;
        Ok(())
    }

    pub fn summary_for(&self, model: Model, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.model == model && s.method == method)
    }
}
