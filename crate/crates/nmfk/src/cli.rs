//! Subcommands behind the `nmfk` binary.

use std::collections::HashMap;

use clap::{Parser, Subcommand};

use crate::config::{Command, Overrides, RunConfig};
use crate::error::{CliError, Result};
use crate::exec::RayonExecutor;
use crate::geojson::{feature_collection, read_assignments};
use crate::pipeline::{run_fixed, run_sweep};
use crate::report::write_reports;
use crate::table::load_table;

/// Latent signature extraction by non-negative matrix factorization with
/// k-means over random restarts.
#[derive(Debug, Parser)]
#[command(name = "nmfk", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Subcommands,
}

#[derive(Debug, Subcommand)]
pub enum Subcommands {
    /// Try every k in a range, pick one, and write its signatures.
    Sweep(Overrides),
    /// Extract signatures for a fixed --k.
    Run(Overrides),
    /// Turn assignments.csv in --output-dir into signatures.geojson, using
    /// the lon/lat columns of --input.
    Geojson(Overrides),
}

fn note(line: &str) {
    eprintln!("nmfk: {line}");
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Subcommands::Sweep(flags) => analyze(flags, Command::Sweep),
        Subcommands::Run(flags) => analyze(flags, Command::Run),
        Subcommands::Geojson(flags) => geojson(&RunConfig::resolve(flags, Command::Geojson)?),
    }
}

fn analyze(flags: &Overrides, command: Command) -> Result<()> {
    let cfg = RunConfig::resolve(flags, command)?;
    let executor = RayonExecutor::new(cfg.threads)
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let analysis = match command {
        Command::Run => run_fixed(&cfg, &executor, note)?,
        _ => run_sweep(&cfg, &executor, note)?,
    };
    for path in write_reports(&cfg.output_dir, &analysis)? {
        note(&format!("wrote {}", path.display()));
    }
    Ok(())
}

fn geojson(cfg: &RunConfig) -> Result<()> {
    let table = load_table(&cfg.input, &cfg.load)?;
    let ds = &table.dataset;
    let coordinates: HashMap<String, (f64, f64)> = ds
        .location_ids
        .iter()
        .zip(&ds.coordinates)
        .filter_map(|(id, c)| c.map(|c| (id.clone(), c)))
        .collect();
    if coordinates.is_empty() {
        return Err(CliError::Ingest {
            path: cfg.input.clone(),
            message: "no lon/lat coordinates".into(),
        });
    }
    let rows = read_assignments(&cfg.output_dir.join("assignments.csv"))?;
    let (collection, skipped) = feature_collection(&rows, &coordinates)?;
    if skipped > 0 {
        note(&format!("skipped {skipped} locations without coordinates"));
    }
    let path = cfg.output_dir.join("signatures.geojson");
    let mut text = serde_json::to_string_pretty(&collection).expect("JSON values serialize");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    note(&format!("wrote {}", path.display()));
    Ok(())
}
