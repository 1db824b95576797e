use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use intervalcp::baseline::quantile_rule;
use intervalcp::conformal::{calibrate, calibrate_local, differential_adjust, split_indices, CalibrationResult};
use intervalcp::rule::PredictionRule;
use intervalcp::sim::{coverage_on, eval_points, generate, integrated_volume, run_experiment, Method, Model, RepSeeds};
use intervalcp::solver::fit_prediction_rule;
use intervalcp::Dataset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, read_covariates, write_sim_csv, Ingested};

#[derive(Debug, Parser)]
#[command(name = "intervalcp", version, about = "Conformal prediction sets for interval-censored outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a simulated training sample and a fresh evaluation sample.
    Simulate(SimulateArgs),
    /// Split a dataset and fit an uncalibrated rule on the training part.
    Fit(FitArgs),
    /// Calibrate a fitted rule on the calibration part of the split.
    Calibrate(CalibrateArgs),
    /// Write the prediction set for every row of a covariate CSV as JSON lines.
    Predict(PredictArgs),
    /// Coverage and integrated volume of a rule on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Run the replicated simulation experiment and write the report files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub model: Model,
    /// Replication index used to derive the seeds from the config seed.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    /// Training sample size; the config `n` when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Evaluation sample size; the config `n_eval` when omitted.
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Method to fit; the first configured method when omitted.
    #[arg(long)]
    pub method: Option<Method>,
    /// Seed of the train/calibration split; the config seed when omitted.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Replace every bracket by its midpoint before fitting.
    #[arg(long)]
    pub impute_midpoint: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub impute_midpoint: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Record of a train/calibration split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub split_frac: f64,
    pub n: usize,
    pub train_indices: Vec<usize>,
    pub calib_indices: Vec<usize>,
}

/// Result of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_eval: usize,
    pub coverage: f64,
    pub latent_coverage: Option<f64>,
    pub undefined: usize,
    /// Integrated volume over the grid range; one-dimensional rules only.
    pub volume: Option<f64>,
    pub bin_coverage: Vec<f64>,
    pub bin_counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Everything that determines the outputs of a run.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: Option<&'a RunConfig>,
    seeds: BTreeMap<&'a str, u64>,
    options: BTreeMap<&'a str, String>,
    inputs: Vec<InputDigest>,
    outputs: Vec<&'a str>,
}

fn digest(path: &Path) -> CliResult<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn load_config(arg: &ConfigArg) -> CliResult<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(cli: &Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cli
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory given".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn data_path(cli: &Option<PathBuf>, fallback: &Option<PathBuf>) -> CliResult<PathBuf> {
    cli.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config("no data file given".into()))
}

fn method_of(cli: Option<Method>, cfg: &RunConfig) -> Method {
    cli.unwrap_or(cfg.methods[0])
}

fn load_data(path: &Path, cfg: &RunConfig, impute: bool) -> CliResult<Ingested> {
    let mut ing = ingest_csv(path, cfg.bracket_map.as_ref())?;
    if impute || cfg.impute_midpoint {
        ing.data = ing.data.impute_midpoint();
    }
    Ok(ing)
}

fn write_manifest(dir: &Path, m: &Manifest<'_>) -> CliResult<()> {
    write_json(&dir.join("manifest.json"), m)
}

fn manifest<'a>(command: &'a str, config: Option<&'a RunConfig>) -> Manifest<'a> {
    Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        seeds: BTreeMap::new(),
        options: BTreeMap::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let dir = out_dir(&Some(args.out_dir.clone()), &cfg)?;
    let seeds = RepSeeds::derive(cfg.seed, args.model, args.rep);
    let n = args.n.unwrap_or(cfg.n);
    let n_eval = args.n_eval.unwrap_or(cfg.n_eval);
    let train = generate(args.model, n, seeds.data)?;
    let fresh = generate(args.model, n_eval, seeds.eval)?;
    write_sim_csv(create(&dir.join("data.csv"))?, &train)?;
    write_sim_csv(create(&dir.join("eval.csv"))?, &fresh)?;
    let mut m = manifest("simulate", Some(&cfg));
    m.seeds.insert("data", seeds.data);
    m.seeds.insert("split", seeds.split);
    m.seeds.insert("eval", seeds.eval);
    m.options.insert("model", args.model.to_string());
    m.options.insert("rep", args.rep.to_string());
    m.options.insert("n", n.to_string());
    m.options.insert("n_eval", n_eval.to_string());
    m.outputs = vec!["data.csv", "eval.csv"];
    write_manifest(&dir, &m)
}

/// Fit the uncalibrated rule of `method` on `train` over `grid`.
pub fn fit_rule(cfg: &RunConfig, method: Method, train: &Dataset, grid: &[Vec<f64>]) -> CliResult<PredictionRule> {
    Ok(match method {
        Method::Quantile(degree) => quantile_rule(train, grid, cfg.alpha, degree)?.rule,
        _ => {
            let spec = cfg.kernel_spec(train)?;
            let psi = cfg.solver.psi.resolve(train.len(), &spec);
            fit_prediction_rule(train, grid, &spec, &cfg.solver_config(psi))?
        }
    })
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let path = data_path(&args.data, &cfg.paths.data)?;
    let dir = out_dir(&args.out_dir, &cfg)?;
    let method = method_of(args.method, &cfg);
    let ing = load_data(&path, &cfg, args.impute_midpoint)?;
    let seed = args.split_seed.unwrap_or(cfg.seed);
    let (train_idx, calib_idx) = split_indices(ing.data.len(), cfg.split_frac, seed)?;
    let train = ing.data.subset(&train_idx)?;
    let grid = cfg.fit_grid(&ing.data)?;
    let rule = fit_rule(&cfg, method, &train, &grid)?;
    write_json(&dir.join("rule.json"), &rule)?;
    write_json(
        &dir.join("split.json"),
        &SplitRecord {
            seed,
            split_frac: cfg.split_frac,
            n: ing.data.len(),
            train_indices: train_idx,
            calib_indices: calib_idx,
        },
    )?;
    let mut m = manifest("fit", Some(&cfg));
    m.seeds.insert("split", seed);
    m.options.insert("method", method.to_string());
    m.options.insert("impute_midpoint", (args.impute_midpoint || cfg.impute_midpoint).to_string());
    m.inputs.push(digest(&path)?);
    m.outputs = vec!["rule.json", "split.json"];
    write_manifest(&dir, &m)
}

/// Calibration artifacts, by method.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum CalibrationOutput {
    Symmetric(CalibrationResult),
    Local(Vec<CalibrationResult>),
    Differential {
        symmetric_threshold: f64,
        weights: Vec<f64>,
        covered: usize,
        required: usize,
    },
}

pub fn calibrate_cmd(args: &CalibrateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let path = data_path(&args.data, &cfg.paths.data)?;
    let dir = out_dir(&args.out_dir, &cfg)?;
    let method = method_of(args.method, &cfg);
    let ing = load_data(&path, &cfg, args.impute_midpoint)?;
    let rule: PredictionRule = read_json(&args.rule)?;
    let split: SplitRecord = read_json(&args.split)?;
    if split.n != ing.data.len() {
        return Err(CliError::Data(format!(
            "split was drawn for {} rows but the data has {}",
            split.n,
            ing.data.len()
        )));
    }
    let calib = ing.data.subset(&split.calib_indices)?;
    let with_split = |mut r: CalibrationResult| {
        r.seed = Some(split.seed);
        r.train_indices = split.train_indices.clone();
        r.calib_indices = split.calib_indices.clone();
        r
    };
    let (calibrated, output) = match method {
        Method::MinUnion | Method::Quantile(_) => {
            let (r, res) = calibrate(&rule, &calib, cfg.alpha)?;
            (r, CalibrationOutput::Symmetric(with_split(res)))
        }
        Method::Local => {
            let partition = cfg.partition(&ing.data)?;
            let (r, res) = calibrate_local(&rule, &calib, &partition, cfg.alpha)?;
            (r, CalibrationOutput::Local(res.into_iter().map(|c| c.without_scores()).collect()))
        }
        Method::Differential => {
            let res = differential_adjust(&rule, calib.observations(), cfg.alpha)?;
            let out = CalibrationOutput::Differential {
                symmetric_threshold: res.symmetric_threshold,
                weights: res.weights.clone(),
                covered: res.covered,
                required: res.required,
            };
            (res.rule, out)
        }
    };
    write_json(&dir.join("calibrated_rule.json"), &calibrated)?;
    write_json(&dir.join("calibration.json"), &output)?;
    let mut m = manifest("calibrate", Some(&cfg));
    m.seeds.insert("split", split.seed);
    m.options.insert("method", method.to_string());
    m.inputs = vec![digest(&path)?, digest(&args.rule)?, digest(&args.split)?];
    m.outputs = vec!["calibrated_rule.json", "calibration.json"];
    write_manifest(&dir, &m)
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let rule: PredictionRule = read_json(&args.rule)?;
    let rows = read_covariates(&args.input)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for (i, x) in rows.iter().enumerate() {
        let line = match rule.set_at(x) {
            Ok(set) => serde_json::to_string(&set).map_err(|e| CliError::Data(e.to_string()))?,
            Err(intervalcp::Error::UndefinedAt { .. }) => "null".to_string(),
            Err(e) => return Err(CliError::Data(format!("row {}: {e}", i + 1))),
        };
        writeln!(out, "{line}").map_err(|e| CliError::Data(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Coverage and volume of `rule` on labeled data.
pub fn evaluate_rule(cfg: &RunConfig, rule: &PredictionRule, ing: &Ingested) -> CliResult<Evaluation> {
    let partition = cfg.partition(&ing.data)?;
    let stats = coverage_on(rule, &ing.points(), Some(&partition))?;
    let volume = if rule.dim() == 1 {
        let lo = rule.grid.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = rule.grid.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<f64> = if lo == hi {
            vec![lo]
        } else {
            intervalcp::rule::linspace_grid(lo, hi, cfg.eval_grid_points)
                .into_iter()
                .map(|p| p[0])
                .collect()
        };
        Some(integrated_volume(rule, &xs)?)
    } else {
        None
    };
    Ok(Evaluation {
        n_eval: stats.n_eval,
        coverage: stats.bracket,
        latent_coverage: ing.latent.as_ref().map(|_| stats.latent),
        undefined: stats.undefined,
        volume,
        bin_coverage: stats.per_cell.iter().map(|c| c.bracket).collect(),
        bin_counts: stats.per_cell.iter().map(|c| c.count).collect(),
    })
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let path = data_path(&args.data, &cfg.paths.eval)?;
    let dir = out_dir(&args.out_dir, &cfg)?;
    let rule: PredictionRule = read_json(&args.rule)?;
    let ing = ingest_csv(&path, cfg.bracket_map.as_ref())?;
    let ev = evaluate_rule(&cfg, &rule, &ing)?;
    write_json(&dir.join("evaluation.json"), &ev)?;
    let mut m = manifest("evaluate", Some(&cfg));
    m.inputs = vec![digest(&args.rule)?, digest(&path)?];
    m.outputs = vec!["evaluation.json"];
    write_manifest(&dir, &m)
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let dir = out_dir(&args.out_dir, &cfg)?;
    let report = run_experiment(&cfg.experiment())?;
    report.write_all(&dir)?;
    let mut m = manifest("report", Some(&cfg));
    m.seeds.insert("master", cfg.seed);
    m.outputs = vec!["records.csv", "long.csv", "summary.json"];
    write_manifest(&dir, &m)
}

/// Evaluation points of one replication, as used by `report`.
pub fn replication_eval_points(cfg: &RunConfig, model: Model, rep: usize) -> CliResult<Vec<(Vec<f64>, f64, f64, f64)>> {
    Ok(eval_points(model, cfg.n_eval, RepSeeds::derive(cfg.seed, model, rep).eval)?)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}
