use std::collections::HashSet;
use std::path::{Path, PathBuf};

use intervalcp::estimator::{bandwidth_rule, KernelFamily, KernelSpec};
use intervalcp::rule::{product_grid, Partition};
use intervalcp::sim::{ExperimentConfig, Method, Model, PsiSpec};
use intervalcp::solver::SolverConfig;
use intervalcp::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSettings {
    pub family: KernelFamily,
    /// Fixed per-dimension bandwidth; the scaled rule of thumb when absent.
    pub bandwidth: Option<Vec<f64>>,
    pub bandwidth_scale: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            family: KernelFamily::Epanechnikov,
            bandwidth: None,
            bandwidth_scale: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_components: usize,
    pub weight_grid: f64,
    pub psi: PsiSpec,
    pub min_component_weight: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_components: 2,
            weight_grid: 1e-4,
            psi: PsiSpec::Fixed(0.0),
            min_component_weight: 0.05,
        }
    }
}

/// Box of equispaced covariate points; bounds default to the data range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    /// Points per dimension; a single entry applies to every dimension.
    pub points: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: None,
            hi: None,
            points: vec![61],
        }
    }
}

/// Equal-width bins over a box; bounds default to the data range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub bins: Vec<usize>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            lo: None,
            hi: None,
            bins: vec![5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// One reported band of a survey outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub code: String,
    pub lower: f64,
    /// Missing for the open-ended top band.
    #[serde(default)]
    pub upper: Option<f64>,
}

/// Band codes and the brackets they stand for, in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketMap {
    pub bands: Vec<Band>,
    /// Upper bound substituted for the open-ended band.
    #[serde(default)]
    pub top_code: Option<f64>,
}

impl BracketMap {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(format!("bracket map: {m}")));
        if self.bands.is_empty() {
            return bad("no bands".into());
        }
        let mut seen = HashSet::new();
        for (i, b) in self.bands.iter().enumerate() {
            if !seen.insert(b.code.as_str()) {
                return bad(format!("duplicate code '{}'", b.code));
            }
            if !b.lower.is_finite() {
                return bad(format!("band '{}' needs a finite lower bound", b.code));
            }
            match b.upper {
                Some(u) if !(u.is_finite() && u >= b.lower) => {
                    return bad(format!("band '{}' has upper bound {u} below {}", b.code, b.lower));
                }
                None if i + 1 != self.bands.len() => {
                    return bad(format!("only the last band may be open-ended, not '{}'", b.code));
                }
                None => match self.top_code {
                    Some(t) if t.is_finite() && t > b.lower => {}
                    _ => return bad("open-ended band needs a finite top_code above its lower bound".into()),
                },
                _ => {}
            }
        }
        for pair in self.bands.windows(2) {
            let prev_hi = pair[0].upper.unwrap_or(f64::INFINITY);
            if pair[1].lower < prev_hi || pair[1].lower < pair[0].lower {
                return bad(format!("bands '{}' and '{}' overlap or are out of order", pair[0].code, pair[1].code));
            }
        }
        Ok(())
    }

    /// The bracket for `code`, with the top code in place of an open bound.
    pub fn bracket(&self, code: &str) -> Option<(f64, f64)> {
        self.bands
            .iter()
            .find(|b| b.code == code)
            .map(|b| (b.lower, b.upper.or(self.top_code).unwrap_or(f64::INFINITY)))
    }
}

/// Everything a command needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub split_frac: f64,
    pub seed: u64,
    pub kernel: KernelSettings,
    pub solver: SolverSettings,
    pub grid: GridSpec,
    pub eval_grid_points: usize,
    pub partition: PartitionSpec,
    pub methods: Vec<Method>,
    pub models: Vec<Model>,
    pub reps: usize,
    pub n: usize,
    pub n_eval: usize,
    pub impute_midpoint: bool,
    pub bracket_map: Option<BracketMap>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            alpha: e.alpha,
            split_frac: e.split_frac,
            seed: e.seed,
            kernel: KernelSettings::default(),
            solver: SolverSettings::default(),
            grid: GridSpec::default(),
            eval_grid_points: e.eval_grid_points,
            partition: PartitionSpec::default(),
            methods: e.methods,
            models: e.models,
            reps: e.reps,
            n: e.n,
            n_eval: e.n_eval,
            impute_midpoint: false,
            bracket_map: None,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.split_frac > 0.0 && self.split_frac < 1.0) {
            return Err(CliError::Config(format!("split_frac must lie in (0, 1), got {}", self.split_frac)));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        if self.grid.points.is_empty() || self.grid.points.contains(&0) || self.eval_grid_points == 0 {
            return Err(CliError::Config("grid sizes must be positive".into()));
        }
        if self.partition.bins.is_empty() || self.partition.bins.contains(&0) {
            return Err(CliError::Config("partition needs at least one bin per dimension".into()));
        }
        if !(self.kernel.bandwidth_scale > 0.0) {
            return Err(CliError::Config("bandwidth_scale must be positive".into()));
        }
        if let Some(h) = &self.kernel.bandwidth {
            KernelSpec::new(self.kernel.family, h.clone())?;
        }
        if let Some(m) = &self.bracket_map {
            m.validate()?;
        }
        self.solver_config(0.0).validate()?;
        self.experiment().validate()?;
        Ok(())
    }

    pub fn solver_config(&self, psi: f64) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            psi,
            max_components: self.solver.max_components,
            weight_grid: self.solver.weight_grid,
            min_component_weight: self.solver.min_component_weight,
        }
    }

    pub fn kernel_spec(&self, train: &Dataset) -> CliResult<KernelSpec> {
        Ok(match &self.kernel.bandwidth {
            Some(h) => KernelSpec::new(self.kernel.family, h.clone())?,
            None => bandwidth_rule(train, self.kernel.bandwidth_scale, self.kernel.family)?,
        })
    }

    /// The experiment described by this configuration.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            models: self.models.clone(),
            methods: self.methods.clone(),
            reps: self.reps,
            seed: self.seed,
            n: self.n,
            alpha: self.alpha,
            split_frac: self.split_frac,
            n_eval: self.n_eval,
            fit_grid_points: self.grid.points[0],
            eval_grid_points: self.eval_grid_points,
            kernel: self.kernel.family,
            bandwidth_scale: self.kernel.bandwidth_scale,
            psi: self.solver.psi,
            max_components: self.solver.max_components,
            weight_grid: self.solver.weight_grid,
            min_component_weight: self.solver.min_component_weight,
            local_bins: self.partition.bins[0],
        }
    }

    /// Fitting grid for `data`, collapsing constant dimensions to one point.
    pub fn fit_grid(&self, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
        let (lo, hi) = resolve_box(self.grid.lo.as_ref(), self.grid.hi.as_ref(), data, "grid")?;
        let points = per_dim(&self.grid.points, data.dim(), "grid.points")?;
        let points: Vec<usize> = points
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&p, (a, b))| if a == b { 1 } else { p })
            .collect();
        Ok(product_grid(&lo, &hi, &points))
    }

    pub fn partition(&self, data: &Dataset) -> CliResult<Partition> {
        let (mut lo, mut hi) =
            resolve_box(self.partition.lo.as_ref(), self.partition.hi.as_ref(), data, "partition")?;
        let bins = per_dim(&self.partition.bins, data.dim(), "partition.bins")?;
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            if *a == *b {
                *a -= 0.5;
                *b += 0.5;
            }
        }
        Ok(Partition::equal_width(&lo, &hi, &bins)?)
    }
}

fn per_dim(v: &[usize], dim: usize, what: &str) -> CliResult<Vec<usize>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(CliError::Config(format!("{what} has {n} entries for {dim} covariates"))),
    }
}

fn resolve_box(
    lo: Option<&Vec<f64>>,
    hi: Option<&Vec<f64>>,
    data: &Dataset,
    what: &str,
) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let range = data.covariate_range();
    let lo = lo.cloned().unwrap_or_else(|| range.iter().map(|r| r.0).collect());
    let hi = hi.cloned().unwrap_or_else(|| range.iter().map(|r| r.1).collect());
    if lo.len() != data.dim() || hi.len() != data.dim() {
        return Err(CliError::Config(format!("{what} bounds do not match the {} covariates", data.dim())));
    }
    if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
        return Err(CliError::Config(format!("{what} bounds must be finite with lo <= hi")));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cps() -> BracketMap {
        serde_json::from_str(include_str!("../../../configs/cps_bands.json")).unwrap()
    }

    #[test]
    fn cps_band_scheme() {
        let m = cps();
        m.validate().unwrap();
        assert_eq!(m.bracket(">60000"), Some((60000.0, 400000.0)));
        assert_eq!(m.bracket("15000-30000"), Some((15000.0, 30000.0)));
        assert_eq!(m.bracket("nope"), None);
    }

    #[test]
    fn bracket_map_rejects_bad_schemes() {
        let mut m = cps();
        m.top_code = None;
        assert!(m.validate().is_err());
        let mut m = cps();
        m.bands.swap(0, 1);
        assert!(m.validate().is_err());
        let mut m = cps();
        m.bands[1].code = m.bands[0].code.clone();
        assert!(m.validate().is_err());
        let mut m = cps();
        m.bands[0].upper = None;
        assert!(m.validate().is_err());
    }

    #[test]
    fn run_config_parsing() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(RunConfig::from_json(r#"{"alpha": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"alhpa": 0.1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"methods": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"solver": {"max_components": 0}}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"solver": {"psi": "auto"}, "methods": ["local", "q2"]}"#).unwrap();
        assert_eq!(cfg.solver.psi, PsiSpec::Auto);
        assert_eq!(cfg.experiment().methods, vec![Method::Local, Method::Quantile(2)]);
    }
}
