//! The named experiments. Each one reads its configuration up front (so
//! unknown keys fail before any work starts) and then runs as a job.

mod conditioned;
mod cooling;
mod cumulant_compare;
mod isolated;
mod lyapunov;
mod passivity;
mod qct_scan;

use qcond_core::grid::PositionGrid;
use qcond_core::moments::MomentSet;
use qcond_core::qdyn::{HygieneAudit, MeasurementSpec};
use qcond_core::state::QuantumState;
use qcond_core::system::SystemSpec;
use qcond_core::wavefn::WaveFunction;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{self, InitialBlock, Reader, RunBlock};
use crate::output::{json_f64, Table};
use crate::{CliError, Experiment};

pub fn build(name: &str, r: &Reader) -> Result<Box<dyn Experiment>, CliError> {
    Ok(match name {
        "isolated" => Box::new(isolated::Isolated::read(r)?),
        "conditioned" => Box::new(conditioned::Conditioned::read(r)?),
        "passivity" => Box::new(passivity::Passivity::read(r)?),
        "cumulant-compare" => Box::new(cumulant_compare::CumulantCompare::read(r)?),
        "qct-scan" => Box::new(qct_scan::QctScan::read(r)?),
        "lyapunov" => Box::new(lyapunov::Lyapunov::read(r)?),
        "cooling" => Box::new(cooling::Cooling::read(r)?),
        other => {
            let names: Vec<&str> = crate::CATALOG.iter().map(|e| e.name).collect();
            return Err(CliError::Config(format!("unknown experiment `{other}`; choose one of {names:?}")));
        }
    })
}

/// Blocks shared by every grid-based experiment.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Common {
    pub system: SystemSpec,
    pub grid: PositionGrid,
    pub meas: MeasurementSpec,
    pub run: RunBlock,
    pub initial: InitialBlock,
}

impl Common {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        Ok(Common {
            system: config::system(r)?,
            grid: config::grid(r)?,
            meas: config::measurement(r)?,
            run: config::run_block(r)?,
            initial: config::initial(r)?,
        })
    }

    pub fn wave_function(&self) -> qcond_core::Result<WaveFunction> {
        let i = self.initial;
        WaveFunction::gaussian(self.grid, self.system.hbar, i.x0, i.p0, i.sigma_x)
    }

    pub fn density(&self) -> qcond_core::Result<QuantumState> {
        Ok(QuantumState::from_pure(&self.wave_function()?))
    }
}

/// Runs `f(i)` for `i < n` on the current worker pool, keeping results in
/// index order.
pub(crate) fn indexed<T: Send>(n: usize, f: impl Fn(usize) -> Result<T, CliError> + Sync + Send) -> Result<Vec<T>, CliError> {
    (0..n).into_par_iter().map(f).collect()
}

pub(crate) const MOMENT_COLUMNS: [(&str, &str); 8] = [
    ("t", "time"),
    ("x_mean", "length"),
    ("p_mean", "momentum"),
    ("c_xx", "length^2"),
    ("c_xp", "length*momentum"),
    ("c_pp", "momentum^2"),
    ("purity", "1"),
    ("energy", "energy"),
];

pub(crate) fn moment_row(t: f64, m: &MomentSet) -> Vec<f64> {
    vec![t, m.x_mean, m.p_mean, m.c_xx, m.c_xp, m.c_pp, m.purity, m.energy]
}

pub(crate) fn moment_table(name: impl Into<String>, times: &[f64], moments: &[MomentSet]) -> Table {
    let mut table = Table::new(name, &MOMENT_COLUMNS);
    for (t, m) in times.iter().zip(moments) {
        table.push_numbers(&moment_row(*t, m));
    }
    table
}

pub(crate) fn hygiene_json(a: &HygieneAudit) -> Value {
    json!({
        "steps": a.steps,
        "max_trace_error": json_f64(a.max_trace_error),
        "max_hermiticity_defect": json_f64(a.max_hermiticity_defect),
        "min_eigenvalue": json_f64(a.min_eigenvalue),
        "eigen_checks": a.eigen_checks,
    })
}

/// Largest `|purity − 1| / t` over samples with `t > 0`.
pub(crate) fn purity_drift(times: &[f64], moments: &[MomentSet]) -> f64 {
    times
        .iter()
        .zip(moments)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, m)| (m.purity - 1.0).abs() / t)
        .fold(0.0, f64::max)
}

/// Zero-padded realization label used in file names.
pub(crate) fn label(i: usize) -> String {
    format!("{i:03}")
}
