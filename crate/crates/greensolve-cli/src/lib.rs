//! Batch runner for greensolve experiments: one TOML config in, a JSON report and CSV tables out.

pub mod commands;
pub mod config;
pub mod report;

use anyhow::Result;
use commands::{Outcome, Run};
use config::{ExperimentConfig, Loaded};
use greensolve::grid::RULE_VERSION;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Assemble,
    Solve,
    Csola,
    Ztest,
    Scaling,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Assemble => "assemble",
            Subcommand::Solve => "solve",
            Subcommand::Csola => "csola",
            Subcommand::Ztest => "ztest",
            Subcommand::Scaling => "scaling",
        }
    }
}

#[derive(Serialize)]
pub struct GridInfo {
    pub dim: usize,
    pub radial_count: usize,
    pub angular_count: usize,
    pub nodes: usize,
    pub rule_version: u32,
    pub hash: String,
}

#[derive(Serialize)]
pub struct KernelInfo {
    pub variant: greensolve::Variant,
    pub s: f64,
    pub boundary_gamma: f64,
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub report_version: u32,
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    pub grid: GridInfo,
    pub kernel: KernelInfo,
    pub config: &'a ExperimentConfig,
    pub result: T,
}

/// What a run produced on disk.
#[derive(Debug)]
pub struct Written {
    pub report: PathBuf,
    pub tables: Vec<PathBuf>,
    /// False when a diagnostic failed (the report is still written).
    pub passed: bool,
}

fn emit<T: Serialize>(run: &Run, sub: Subcommand, out: Outcome<T>, passed: bool) -> Result<Written> {
    let cfg = &run.loaded.config;
    let report = Report {
        report_version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        subcommand: sub.name(),
        seed: run.seed,
        grid: GridInfo {
            dim: run.grid.dim(),
            radial_count: cfg.grid.radial_count,
            angular_count: cfg.grid.angular_count,
            nodes: run.grid.len(),
            rule_version: RULE_VERSION,
            hash: run.grid.hash_hex(),
        },
        kernel: KernelInfo {
            variant: run.kernel.variant(),
            s: run.kernel.order(),
            boundary_gamma: run.kernel.boundary_gamma(),
        },
        config: cfg,
        result: out.result,
    };
    let path = run.loaded.resolve(&cfg.outputs.report_path);
    report::write_atomic(&path, &report::to_json(&report)?)?;
    let dir = run.loaded.resolve(&cfg.outputs.tables_path);
    let mut tables = vec![];
    for t in &out.tables {
        t.write(&dir)?;
        tables.push(dir.join(format!("{}.csv", t.name)));
    }
    Ok(Written { report: path, tables, passed })
}

/// Run one subcommand from a config file.
pub fn run(sub: Subcommand, config: &Path, seed: Option<u64>, cache_dir: Option<&Path>) -> Result<Written> {
    let loaded = Loaded::read(config)?;
    let run = Run::build(loaded, seed, cache_dir)?;
    match sub {
        Subcommand::Assemble => emit(&run, sub, commands::assemble(&run)?, true),
        Subcommand::Solve => emit(&run, sub, commands::solve(&run)?, true),
        Subcommand::Csola => emit(&run, sub, commands::run_csola(&run)?, true),
        Subcommand::Ztest => {
            let out = commands::ztest(&run)?;
            let ok = out.result.all_agree;
            emit(&run, sub, out, ok)
        }
        Subcommand::Scaling => emit(&run, sub, commands::scaling(&run)?, true),
    }
}
