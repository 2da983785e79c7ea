//! Grid expansion, per-cell seeding and dispatch to the library.

use std::collections::BTreeMap;
use std::time::Instant;

use mixrg::flow::{FlowKind, FlowMap};
use mixrg::matching::decode_failure_rate;
use mixrg::rg::{density_flow, threshold_from_trajectories, RgTrajectory};
use mixrg::rng::{derive_seed, mix64};
use mixrg::stats::family_crossing;
use mixrg::tmwpm::agreement_probability;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

/// One CSV field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
}

impl Value {
    /// Integers in decimal, floats with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:.16e}"),
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Int(v) => v as f64,
            Value::Float(v) => v,
        }
    }
}

/// Parameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Flow { x0: f64, b: usize, size: usize },
    Rg { p: f64, size: usize },
    Decode { p: f64, size: usize },
    Tmwpm { p: f64, a: usize, b: usize, size: usize },
}

impl Cell {
    /// Stable key built from the parameter values, so adding grid points
    /// leaves the seeds of existing cells unchanged.
    pub fn key(&self) -> u64 {
        let words: Vec<u64> = match *self {
            Cell::Flow { x0, b, size } => vec![0, x0.to_bits(), b as u64, size as u64],
            Cell::Rg { p, size } => vec![1, p.to_bits(), size as u64],
            Cell::Decode { p, size } => vec![2, p.to_bits(), size as u64],
            Cell::Tmwpm { p, a, b, size } => vec![3, p.to_bits(), a as u64, b as u64, size as u64],
        };
        words.into_iter().fold(0x6d69_7872_6763_656c, |acc, w| mix64(acc ^ w))
    }
}

/// A cell whose module call failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellError {
    pub cell: usize,
    pub params: Cell,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool_version: &'static str,
    pub config_hash: String,
    pub config: String,
    pub master_seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub header: &'static [&'static str],
    /// One row per cell, or per cell and level for trajectory outputs.
    /// Failed cells keep their parameter fields and carry NaN estimates.
    pub rows: Vec<Vec<Value>>,
    pub cells: usize,
    pub errors: Vec<CellError>,
    /// Derived summary numbers such as curve crossings.
    pub estimates: BTreeMap<String, f64>,
    pub metadata: Metadata,
}

pub const FLOW_COLUMNS: &[&str] = &["x0", "b", "level", "x", "L", "fidelity"];
pub const RG_COLUMNS: &[&str] = &["p", "L", "level", "q_mean", "q_stderr", "N", "seed"];
pub const DECODE_COLUMNS: &[&str] = &["p", "L", "failures", "N", "rate", "stderr"];
pub const TMWPM_COLUMNS: &[&str] = &["p", "a", "b", "L", "mu", "stderr", "N", "seed"];

/// Cells in canonical order: outer loops over the structural parameters,
/// innermost over `p` (or `beta`).
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    match config.experiment {
        Experiment::Flow => {
            let xs = if config.flow_kind == FlowKind::ThermalBeta { &config.beta } else { &config.p };
            for b in config.flow_blocks() {
                for &size in &config.sizes {
                    out.extend(xs.iter().map(|&x0| Cell::Flow { x0, b, size }));
                }
            }
        }
        Experiment::RgDecoder => {
            for &size in &config.sizes {
                out.extend(config.p.iter().map(|&p| Cell::Rg { p, size }));
            }
        }
        Experiment::Decode => {
            for &size in &config.sizes {
                out.extend(config.p.iter().map(|&p| Cell::Decode { p, size }));
            }
        }
        Experiment::Tmwpm => {
            for (a, b, size) in config.tmwpm_geometries() {
                out.extend(config.p.iter().map(|&p| Cell::Tmwpm { p, a, b, size }));
            }
        }
    }
    out
}

enum Output {
    Rows(Vec<Vec<Value>>),
    Trajectory(RgTrajectory),
}

fn nan() -> Value {
    Value::Float(f64::NAN)
}

fn run_cell(config: &ExperimentConfig, cell: Cell, seed: u64) -> mixrg::Result<Output> {
    let n = config.samples;
    match cell {
        Cell::Flow { x0, b, size } => {
            let t = FlowMap::new(config.flow_kind, b)?.trajectory(x0, size, config.levels)?;
            Ok(Output::Rows(
                (0..t.values.len())
                    .map(|l| {
                        vec![
                            Value::Float(x0),
                            Value::Int(b as u64),
                            Value::Int(l as u64),
                            Value::Float(t.values[l]),
                            Value::Int(t.sizes[l] as u64),
                            Value::Float(t.fidelities[l]),
                        ]
                    })
                    .collect(),
            ))
        }
        Cell::Rg { p, size } => Ok(Output::Trajectory(density_flow(p, size, config.levels, n, seed)?)),
        Cell::Decode { p, size } => {
            let e = decode_failure_rate(p, size, n, seed)?;
            Ok(Output::Rows(vec![vec![
                Value::Float(p),
                Value::Int(size as u64),
                Value::Int(e.failures as u64),
                Value::Int(n as u64),
                Value::Float(e.rate),
                Value::Float(e.stderr),
            ]]))
        }
        Cell::Tmwpm { p, a, b, size } => {
            let e = agreement_probability(p, a, b, size, n, seed)?;
            Ok(Output::Rows(vec![vec![
                Value::Float(p),
                Value::Int(a as u64),
                Value::Int(b as u64),
                Value::Int(size as u64),
                Value::Float(e.mu),
                Value::Float(e.stderr),
                Value::Int(n as u64),
                Value::Int(seed),
            ]]))
        }
    }
}

fn rg_rows(config: &ExperimentConfig, p: f64, size: usize, seed: u64, t: Option<&RgTrajectory>) -> Vec<Vec<Value>> {
    (0..=config.levels)
        .map(|l| {
            let (q, se) = t.map_or((nan(), nan()), |t| (Value::Float(t.densities[l]), Value::Float(t.stderr[l])));
            vec![
                Value::Float(p),
                Value::Int(size as u64),
                Value::Int(l as u64),
                q,
                se,
                Value::Int(config.samples as u64),
                Value::Int(seed),
            ]
        })
        .collect()
}

fn failed_rows(config: &ExperimentConfig, cell: Cell, seed: u64) -> Vec<Vec<Value>> {
    let n = Value::Int(config.samples as u64);
    match cell {
        Cell::Flow { x0, b, size } => vec![vec![
            Value::Float(x0),
            Value::Int(b as u64),
            Value::Int(0),
            nan(),
            Value::Int(size as u64),
            nan(),
        ]],
        Cell::Rg { p, size } => rg_rows(config, p, size, seed, None),
        Cell::Decode { p, size } => vec![vec![Value::Float(p), Value::Int(size as u64), nan(), n, nan(), nan()]],
        Cell::Tmwpm { p, a, b, size } => vec![vec![
            Value::Float(p),
            Value::Int(a as u64),
            Value::Int(b as u64),
            Value::Int(size as u64),
            nan(),
            nan(),
            n,
            Value::Int(seed),
        ]],
    }
}

/// Runs every cell of the grid on a pool of `config.workers` threads.
///
/// Each cell gets the seed `derive_seed(master, cell.key())` and results are
/// collected in grid order, so the rows depend only on the configuration.
pub fn run(config: &ExperimentConfig) -> SweepResult {
    let start = Instant::now();
    let grid = cells(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("thread pool");
    let outputs: Vec<(u64, mixrg::Result<Output>)> = pool.install(|| {
        grid.par_iter()
            .map(|&cell| {
                let seed = derive_seed(config.seed, cell.key());
                (seed, run_cell(config, cell, seed))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut trajectories: BTreeMap<usize, Vec<RgTrajectory>> = BTreeMap::new();
    for (index, (&cell, (seed, outcome))) in grid.iter().zip(outputs).enumerate() {
        match outcome {
            Ok(Output::Rows(r)) => rows.extend(r),
            Ok(Output::Trajectory(t)) => {
                if let Cell::Rg { p, size } = cell {
                    rows.extend(rg_rows(config, p, size, seed, Some(&t)));
                    trajectories.entry(size).or_default().push(t);
                }
            }
            Err(e) => {
                rows.extend(failed_rows(config, cell, seed));
                errors.push(CellError {
                    cell: index,
                    params: cell,
                    message: e.to_string(),
                });
            }
        }
    }
    let estimates = estimates(config, &rows, trajectories);
    SweepResult {
        experiment: config.experiment,
        header: header(config.experiment),
        rows,
        cells: grid.len(),
        errors,
        estimates,
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: config.hash(),
            config: config.canonical(),
            master_seed: config.seed,
            workers: pool.current_num_threads(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    }
}

pub fn header(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::Flow => FLOW_COLUMNS,
        Experiment::RgDecoder => RG_COLUMNS,
        Experiment::Decode => DECODE_COLUMNS,
        Experiment::Tmwpm => TMWPM_COLUMNS,
    }
}

// Curve crossings: per size for the renormalization sweep, across sizes for
// the decoder failure rate and across geometries for the agreement rate.
fn estimates(config: &ExperimentConfig, rows: &[Vec<Value>], mut trajectories: BTreeMap<usize, Vec<RgTrajectory>>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    match config.experiment {
        Experiment::Flow => {}
        Experiment::RgDecoder => {
            for (size, ts) in trajectories.iter_mut() {
                ts.sort_by(|a, b| a.p.total_cmp(&b.p));
                if let Ok(p_c) = threshold_from_trajectories(ts) {
                    out.insert(format!("p_c[L={size}]"), p_c);
                }
            }
        }
        Experiment::Decode | Experiment::Tmwpm => {
            let (estimate_col, group_cols, rising, name) = if config.experiment == Experiment::Decode {
                (4, &[1usize][..], true, "failure_rate_crossing")
            } else {
                (4, &[1usize, 2, 3][..], false, "agreement_crossing")
            };
            let mut curves: BTreeMap<Vec<u64>, Vec<(f64, f64)>> = BTreeMap::new();
            for row in rows {
                let y = row[estimate_col].as_f64();
                if y.is_finite() {
                    let key = group_cols.iter().map(|&c| row[c].as_f64() as u64).collect();
                    curves.entry(key).or_default().push((row[0].as_f64(), y));
                }
            }
            let mut curves: Vec<Vec<(f64, f64)>> = curves.into_values().collect();
            for c in &mut curves {
                c.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            if curves.len() >= 2 {
                if let Ok(x) = family_crossing(&curves, rising) {
                    out.insert(name.to_string(), x);
                }
            }
        }
    }
    out
}
