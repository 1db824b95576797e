//! Batch front-end for `intervalcp`: CSV ingestion with optional survey
//! band codes, the fit / calibrate / predict / evaluate pipeline, and the
//! replicated simulation report. Every command that writes a directory also
//! writes a `manifest.json` with the configuration, seeds and input digests.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use commands::{run, Cli, Command, Evaluation, SplitRecord};
pub use config::{Band, BracketMap, RunConfig};
pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, read_dataset, Ingested};
