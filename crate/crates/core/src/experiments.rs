//! Parameter sweeps over schemes and device drops, with CSV output.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orchestrator::{AoOptions, SchemeId, SchemeRunner};
use crate::scenario::{sample_devices, ScenarioConfig};
use crate::system_model::SystemModel;

pub const CSV_HEADER: &str =
    "sweep_param,value,scheme,seed,objective_bits,harvested_joules,tau1,tau2,outer_iters";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Base-station power, dBm.
    BsPowerDbm,
    NumAntennas,
    /// Bandwidth, Hz.
    Bandwidth,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::BsPowerDbm => "bs_power_dbm",
            SweepParam::NumAntennas => "num_antennas",
            SweepParam::Bandwidth => "bandwidth",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::BsPowerDbm => cfg.set_bs_power_dbm(value),
            SweepParam::NumAntennas => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("num_antennas must be a positive integer, got {value}")));
                }
                cfg.num_antennas = value as usize;
            }
            SweepParam::Bandwidth => cfg.bandwidth = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bs_power_dbm" => Ok(SweepParam::BsPowerDbm),
            "num_antennas" => Ok(SweepParam::NumAntennas),
            "bandwidth" => Ok(SweepParam::Bandwidth),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub seeds: Vec<u64>,
    pub options: AoOptions,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, schemes: Vec<SchemeId>, seeds: Vec<u64>) -> Self {
        Self { param, values, schemes, seeds, options: AoOptions::default(), workers: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Precondition("sweep needs at least one value".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Precondition("sweep needs at least one scheme".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Precondition("sweep needs at least one seed".into()));
        }
        Ok(())
    }
}

/// One (value, scheme, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: SchemeId,
    pub seed: u64,
    pub objective_bits: f64,
    pub harvested_joules: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub outer_iters: usize,
    /// Capacity after every outer iteration, initial value first.
    pub convergence: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

/// Seed average of one (value, scheme) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub objective_bits: f64,
    pub harvested_joules: f64,
    pub samples: usize,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn mean(&self, value: f64, scheme: SchemeId) -> Option<CellMean> {
        let ok: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.value == value && r.scheme == scheme && r.error.is_none())
            .collect();
        if ok.is_empty() {
            return None;
        }
        let n = ok.len() as f64;
        Some(CellMean {
            objective_bits: ok.iter().map(|r| r.objective_bits).sum::<f64>() / n,
            harvested_joules: ok.iter().map(|r| r.harvested_joules).sum::<f64>() / n,
            samples: ok.len(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(128 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.param.name(),
                r.value,
                r.scheme.name(),
                r.seed,
                r.objective_bits,
                r.harvested_joules,
                r.tau1,
                r.tau2,
                r.outer_iters
            );
        }
        s
    }
}

fn failed_row(value: f64, scheme: SchemeId, seed: u64, err: &Error) -> SweepRow {
    SweepRow {
        value,
        scheme,
        seed,
        objective_bits: f64::NAN,
        harvested_joules: f64::NAN,
        tau1: f64::NAN,
        tau2: f64::NAN,
        outer_iters: 0,
        convergence: Vec::new(),
        error: Some(err.to_string()),
    }
}

fn run_cell(spec: &SweepSpec, base: &ScenarioConfig, value: f64, seed: u64) -> Vec<SweepRow> {
    let model = spec
        .param
        .apply(base, value)
        .map(|mut cfg| {
            cfg.rng_seed = seed;
            cfg
        })
        .and_then(|cfg| {
            let devices = sample_devices(&cfg);
            SystemModel::new(cfg, devices)
        });
    let model = match model {
        Ok(m) => m,
        Err(e) => return spec.schemes.iter().map(|&s| failed_row(value, s, seed, &e)).collect(),
    };
    let mut runner = SchemeRunner::new(&model, spec.options.clone());
    spec.schemes
        .iter()
        .map(|&scheme| match runner.run(scheme) {
            Ok(out) => SweepRow {
                value,
                scheme,
                seed,
                objective_bits: out.state.objective,
                harvested_joules: out.harvested_energy(&model),
                tau1: out.state.alloc.tau1,
                tau2: out.state.alloc.tau2,
                outer_iters: out.outer_iters(),
                convergence: out.trace.objectives(),
                error: None,
            },
            Err(e) => failed_row(value, scheme, seed, &e),
        })
        .collect()
}

/// Runs every (value, seed) cell concurrently; rows come back ordered by
/// value, then scheme, then seed, in the order given by `spec`.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig) -> Result<SweepTable> {
    spec.validate()?;
    base.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.seeds.len()).map(move |s| (v, s)))
        .collect();
    let work = || -> Vec<Vec<SweepRow>> {
        cells
            .par_iter()
            .map(|&(v, s)| run_cell(spec, base, spec.values[v], spec.seeds[s]))
            .collect()
    };
    let results = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut keyed: Vec<(usize, usize, usize, SweepRow)> = Vec::with_capacity(cells.len() * spec.schemes.len());
    for (&(v, s), rows) in cells.iter().zip(results) {
        for (i, row) in rows.into_iter().enumerate() {
            keyed.push((v, i, s, row));
        }
    }
    keyed.sort_by_key(|(v, i, s, _)| (*v, *i, *s));
    Ok(SweepTable { param: spec.param, rows: keyed.into_iter().map(|(.., r)| r).collect() })
}

pub fn emit_csv(table: &SweepTable, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Precondition("refusing to write an empty table".into()));
    }
    fs::write(path, table.to_csv())?;
    Ok(())
}
