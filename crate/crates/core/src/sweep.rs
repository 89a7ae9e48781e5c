//! Parameter sweeps over a base scenario, written as CSV.
//!
//! Sweep file:
//!
//! ```toml
//! scenario = "builtin:linear10"     # or a scenario file, relative to this file
//! lambdas = [0.40, 0.45, 0.50, 0.55]
//! epsilons = [0.005]                # optional, default: the scenario's
//! schedulers = ["bp", "flq-mws"]    # optional, default: the scenario's
//! seeds = [1, 2]                    # optional, default: the scenario's
//!
//! [simulation]                      # optional overrides, as in scenario files
//! horizon = 100000
//! ```
//!
//! Cells are the Cartesian product in the order λ, ε, scheduler, seed (seed
//! varies fastest). Each cell runs with a seed derived from its listed seed
//! and its index, so appending values to an axis leaves earlier cells alone.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::scenario::{apply_sim, load_scenario, read, RawSim, ScenarioError};
use crate::schedulers::SchedulerKind;
use crate::sim::{average_delay, run, stability_estimate, Scenario, SimError, SimTrace, MIN_STABILITY_HORIZON};

pub const CSV_HEADER: [&str; 10] = [
    "scheduler",
    "lambda",
    "epsilon",
    "seed",
    "T",
    "delivered",
    "avg_delay",
    "final_backlog",
    "slope",
    "verdict",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cell {index} ({scheduler}, lambda {lambda}): {source}")]
    Run {
        index: usize,
        scheduler: SchedulerKind,
        lambda: String,
        source: SimError,
    },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

/// Empty axes fall back to the base scenario's value.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: Scenario,
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub schedulers: Vec<SchedulerKind>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    /// `None` keeps the base scenario's per-flow rates.
    pub lambda: Option<f64>,
    pub epsilon: f64,
    pub scheduler: SchedulerKind,
    pub base_seed: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub horizon: u64,
    pub delivered: u64,
    pub avg_delay: Option<f64>,
    pub final_backlog: u64,
    /// `None` when the horizon is too short for a verdict.
    pub slope: Option<f64>,
    pub verdict: Option<&'static str>,
}

pub fn derive_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng.next_u64()
}

impl SweepSpec {
    pub fn new(base: Scenario) -> Self {
        Self {
            base,
            lambdas: Vec::new(),
            epsilons: Vec::new(),
            schedulers: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn cells(&self) -> Vec<SweepCell> {
        let cfg = &self.base.config;
        let lambdas: Vec<Option<f64>> = if self.lambdas.is_empty() {
            vec![None]
        } else {
            self.lambdas.iter().copied().map(Some).collect()
        };
        let epsilons = if self.epsilons.is_empty() { vec![cfg.epsilon] } else { self.epsilons.clone() };
        let schedulers = if self.schedulers.is_empty() { vec![cfg.scheduler] } else { self.schedulers.clone() };
        let seeds = if self.seeds.is_empty() { vec![cfg.seed] } else { self.seeds.clone() };
        let mut out = Vec::with_capacity(lambdas.len() * epsilons.len() * schedulers.len() * seeds.len());
        for &lambda in &lambdas {
            for &epsilon in &epsilons {
                for &scheduler in &schedulers {
                    for &base_seed in &seeds {
                        let index = out.len();
                        out.push(SweepCell {
                            index,
                            lambda,
                            epsilon,
                            scheduler,
                            base_seed,
                            seed: derive_seed(base_seed, index),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn scenario_for(&self, cell: &SweepCell) -> Scenario {
        let s = match cell.lambda {
            Some(l) => self.base.with_rate(l),
            None => self.base.clone(),
        };
        s.with_epsilon(cell.epsilon)
            .with_scheduler(cell.scheduler)
            .with_seed(cell.seed)
    }
}

pub fn run_cell(spec: &SweepSpec, cell: &SweepCell) -> Result<SweepRow, SimError> {
    let trace = run(&spec.scenario_for(cell))?;
    row_from_trace(cell, &trace)
}

/// Summary row for a finished run.
pub fn row_from_trace(cell: &SweepCell, trace: &SimTrace) -> Result<SweepRow, SimError> {
    let (slope, verdict) = if trace.horizon >= MIN_STABILITY_HORIZON {
        let v = stability_estimate(trace)?;
        (Some(v.slope), Some(v.status.name()))
    } else {
        (None, None)
    };
    Ok(SweepRow {
        cell: cell.clone(),
        horizon: trace.horizon,
        delivered: trace.total_delivered(),
        avg_delay: average_delay(trace).ok(),
        final_backlog: trace.final_backlog,
        slope,
        verdict,
    })
}

/// Runs every cell (concurrently); rows come back in enumeration order.
pub fn run_sweep_rows(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    spec.cells()
        .par_iter()
        .map(|cell| {
            run_cell(spec, cell).map_err(|source| SweepError::Run {
                index: cell.index,
                scheduler: cell.scheduler,
                lambda: fmt_lambda(cell.lambda),
                source,
            })
        })
        .collect()
}

fn fmt_lambda(l: Option<f64>) -> String {
    l.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn csv_fields(row: &SweepRow) -> [String; 10] {
    [
        row.cell.scheduler.name().to_string(),
        fmt_lambda(row.cell.lambda),
        row.cell.epsilon.to_string(),
        row.cell.seed.to_string(),
        row.horizon.to_string(),
        row.delivered.to_string(),
        row.avg_delay.map_or_else(|| "NA".into(), |d| format!("{d:.3}")),
        row.final_backlog.to_string(),
        row.slope.map_or_else(|| "NA".into(), |s| format!("{s:.3e}")),
        row.verdict.unwrap_or("NA").to_string(),
    ]
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(csv_fields(row))?;
    }
    w.flush()
}

/// Runs the sweep and writes the CSV to `path`.
pub fn run_sweep(spec: &SweepSpec, path: &Path) -> Result<Vec<SweepRow>, SweepError> {
    let werr = |e: std::io::Error| SweepError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    // Fail on an unwritable path before spending time on the runs.
    let file = std::fs::File::create(path).map_err(werr)?;
    let rows = run_sweep_rows(spec)?;
    write_csv(&rows, std::io::BufWriter::new(file)).map_err(werr)?;
    Ok(rows)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    scenario: String,
    #[serde(default)]
    lambdas: Vec<f64>,
    #[serde(default)]
    epsilons: Vec<f64>,
    #[serde(default)]
    schedulers: Vec<String>,
    #[serde(default)]
    seeds: Vec<u64>,
    simulation: Option<RawSim>,
}

/// Parses a sweep file; relative scenario paths resolve against `base_dir`.
pub fn parse_sweep(text: &str, base_dir: &Path) -> Result<SweepSpec, ScenarioError> {
    let raw: RawSweep = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let source = if raw.scenario.starts_with("builtin:") {
        raw.scenario.clone()
    } else {
        let p = PathBuf::from(&raw.scenario);
        if p.is_absolute() { p } else { base_dir.join(p) }.display().to_string()
    };
    let mut base = load_scenario(&source)?;
    if let Some(sim) = &raw.simulation {
        apply_sim(sim, &mut base.config)?;
    }
    let field = |f: &str, m: String| ScenarioError::Field {
        line: None,
        field: f.to_string(),
        message: m,
    };
    if let Some(l) = raw.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(field("lambdas", format!("must be finite and >= 0, got {l}")));
    }
    if let Some(e) = raw.epsilons.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(field("epsilons", format!("must be finite and >= 0, got {e}")));
    }
    let schedulers = raw
        .schedulers
        .iter()
        .map(|s| s.parse::<SchedulerKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| field("schedulers", m))?;
    Ok(SweepSpec {
        base,
        lambdas: raw.lambdas,
        epsilons: raw.epsilons,
        schedulers,
        seeds: raw.seeds,
    })
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec, ScenarioError> {
    let text = read(path)?;
    parse_sweep(&text, path.parent().unwrap_or(Path::new(".")))
}
