use std::io::{Read, Write};
use std::path::Path;

use intervalcp::sim::SimData;
use intervalcp::{Dataset, Observation};

use crate::config::BracketMap;
use crate::error::{CliError, CliResult};

pub const Y_LOWER: &str = "y_lower";
pub const Y_UPPER: &str = "y_upper";
pub const BAND: &str = "band";
pub const Y_LATENT: &str = "y_latent";
const RESERVED: [&str; 4] = [Y_LOWER, Y_UPPER, BAND, Y_LATENT];

/// A dataset read from CSV, with the optional latent-outcome column kept
/// apart from the estimation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: Dataset,
    pub covariates: Vec<String>,
    pub latent: Option<Vec<f64>>,
}

impl Ingested {
    /// `(x, y_lower, y_upper, y_latent)` rows; the latent value is NaN when
    /// the column is absent.
    pub fn points(&self) -> Vec<(Vec<f64>, f64, f64, f64)> {
        self.data
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let y = self.latent.as_ref().map_or(f64::NAN, |l| l[i]);
                (o.x.clone(), o.y_lo, o.y_hi, y)
            })
            .collect()
    }
}

fn parse_num(s: &str, row: usize, col: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .ok_or_else(|| CliError::Data(format!("row {row}: column '{col}' has non-numeric value '{s}'")))
}

struct Layout {
    covariates: Vec<(usize, String)>,
    lower: Option<usize>,
    upper: Option<usize>,
    band: Option<usize>,
    latent: Option<usize>,
}

fn layout(headers: &csv::StringRecord) -> Layout {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    Layout {
        covariates: headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !RESERVED.contains(&h.trim()))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect(),
        lower: find(Y_LOWER),
        upper: find(Y_UPPER),
        band: find(BAND),
        latent: find(Y_LATENT),
    }
}

fn covariates_of(rec: &csv::StringRecord, lay: &Layout, row: usize) -> CliResult<Vec<f64>> {
    if lay.covariates.is_empty() {
        // No covariate columns: a constant pseudo-covariate.
        return Ok(vec![0.0]);
    }
    lay.covariates
        .iter()
        .map(|(i, name)| parse_num(rec.get(*i).unwrap_or(""), row, name))
        .collect()
}

/// Read outcome data. Every column other than `y_lower`, `y_upper`, `band`
/// and `y_latent` is a covariate. A row with a non-empty `band` cell takes its
/// bracket from `bracket_map`; other rows need `y_lower` and `y_upper`, equal
/// for exactly observed outcomes. Rows are numbered from 1 after the header.
pub fn read_dataset<R: Read>(reader: R, bracket_map: Option<&BracketMap>) -> CliResult<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let lay = layout(&headers);
    let has_bounds = lay.lower.is_some() && lay.upper.is_some();
    if !has_bounds && lay.band.is_none() {
        return Err(CliError::Data(format!(
            "need columns '{Y_LOWER}' and '{Y_UPPER}', or '{BAND}'"
        )));
    }
    if lay.band.is_some() && bracket_map.is_none() {
        return Err(CliError::Config(format!("column '{BAND}' requires a bracket_map")));
    }
    let mut obs = Vec::new();
    let mut latent = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        let x = covariates_of(&rec, &lay, row)?;
        let band = lay.band.and_then(|b| rec.get(b)).filter(|s| !s.is_empty());
        let (lo, hi) = match (band, bracket_map) {
            (Some(code), Some(map)) => map
                .bracket(code)
                .ok_or_else(|| CliError::Data(format!("row {row}: unknown band code '{code}'")))?,
            _ => {
                let (Some(l), Some(u)) = (lay.lower, lay.upper) else {
                    return Err(CliError::Data(format!("row {row}: no band and no bounds")));
                };
                (
                    parse_num(rec.get(l).unwrap_or(""), row, Y_LOWER)?,
                    parse_num(rec.get(u).unwrap_or(""), row, Y_UPPER)?,
                )
            }
        };
        if lo > hi {
            return Err(CliError::Data(format!("row {row}: y_lower {lo} exceeds y_upper {hi}")));
        }
        if let Some(c) = lay.latent {
            latent.push(parse_num(rec.get(c).unwrap_or(""), row, Y_LATENT)?);
        }
        obs.push(Observation::new(x, lo, hi).map_err(|e| CliError::Data(format!("row {row}: {e}")))?);
    }
    let data = Dataset::new(obs)?;
    Ok(Ingested {
        data,
        covariates: lay.covariates.into_iter().map(|c| c.1).collect(),
        latent: lay.latent.map(|_| latent),
    })
}

pub fn ingest_csv(path: &Path, bracket_map: Option<&BracketMap>) -> CliResult<Ingested> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    read_dataset(f, bracket_map)
}

/// Covariate rows of a CSV; outcome columns, if present, are ignored.
pub fn read_covariates(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let headers = rdr.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let lay = layout(&headers);
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))?;
            covariates_of(&rec, &lay, i + 1)
        })
        .collect()
}

/// Write simulated data as `x1..xd, y_lower, y_upper, y_latent`.
pub fn write_sim_csv<W: Write>(w: W, sim: &SimData) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Data(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=sim.data.dim()).map(|j| format!("x{j}")).collect();
    header.extend([Y_LOWER, Y_UPPER, Y_LATENT].map(String::from));
    out.write_record(&header).map_err(io)?;
    for (o, y) in sim.data.iter().zip(&sim.latent) {
        let mut row: Vec<String> = o.x.iter().map(|v| v.to_string()).collect();
        row.extend([o.y_lo, o.y_hi, *y].map(|v| v.to_string()));
        out.write_record(&row).map_err(io)?;
    }
    out.flush().map_err(|e| CliError::Data(e.to_string()))
}
