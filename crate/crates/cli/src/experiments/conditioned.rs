use qcond_core::noise::WienerStream;
use qcond_core::qdyn::{simulate_conditioned, HygieneAudit, MeasurementRecord, MomentTrajectory, Propagator};
use qcond_core::state::GridState;
use qcond_core::stats;
use serde_json::json;

use super::{hygiene_json, indexed, label, moment_table, purity_drift, Common};
use crate::config::{self, Reader};
use crate::output::{json_f64, Table};
use crate::{CliError, Experiment, Outcome};

pub struct Conditioned {
    common: Common,
    pure: bool,
    write_realizations: usize,
    positivity_every: u64,
}

impl Conditioned {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let common = Common::read(r)?;
        if common.meas.strength == 0.0 {
            return Err(CliError::Config("conditioned runs need measurement.k > 0".into()));
        }
        let pure = config::pure_representation(r, "wavefunction")?;
        let write_realizations = r.usize_or("conditioned", "write_realizations", 4)?;
        let positivity_every = r.u64_or("conditioned", "positivity_every", 100)?;
        Ok(Conditioned { common, pure, write_realizations, positivity_every })
    }

    fn one<S: GridState>(&self, mut state: S, i: usize) -> Result<(MomentTrajectory, MeasurementRecord, HygieneAudit), CliError> {
        let c = &self.common;
        let mut prop = Propagator::new(c.grid, c.system, c.meas)?;
        prop.positivity_every = self.positivity_every;
        let mut noise = WienerStream::new(c.run.master_seed, i as u64, c.run.dt)?;
        let (traj, record) = simulate_conditioned(&mut prop, &mut state, &mut noise, 0.0, c.run.n_steps(), c.run.sample_every)?;
        Ok((traj, record, prop.audit))
    }
}

impl Experiment for Conditioned {
    fn execute(&self) -> Result<Outcome, CliError> {
        let c = &self.common;
        let n = c.run.n_realizations.max(1);
        let runs = indexed(n, |i| if self.pure { self.one(c.wave_function()?, i) } else { self.one(c.density()?, i) })?;

        let times = runs[0].0.times.clone();
        let mut mean = Table::new(
            "conditioned_mean",
            &[
                ("t", "time"),
                ("x_mean", "length"),
                ("x_mean_se", "length"),
                ("p_mean", "momentum"),
                ("c_xx", "length^2"),
                ("c_pp", "momentum^2"),
                ("purity", "1"),
                ("energy", "energy"),
            ],
        );
        for (j, &t) in times.iter().enumerate() {
            let col = |f: fn(&qcond_core::MomentSet) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.0.moments[j])).collect() };
            let xs = col(|m| m.x_mean);
            mean.push_numbers(&[
                t,
                stats::mean(&xs),
                if n > 1 { stats::std_error(&xs) } else { f64::NAN },
                stats::mean(&col(|m| m.p_mean)),
                stats::mean(&col(|m| m.c_xx)),
                stats::mean(&col(|m| m.c_pp)),
                stats::mean(&col(|m| m.purity)),
                stats::mean(&col(|m| m.energy)),
            ]);
        }
        let mut tables = vec![mean];
        for (i, (traj, record, _)) in runs.iter().enumerate().take(self.write_realizations) {
            tables.push(moment_table(format!("conditioned_real_{}", label(i)), &traj.times, &traj.moments));
            let mut rec = Table::new(format!("record_{}", label(i)), &[("t", "time"), ("dy", "length*time")]);
            for (t, dy) in record.times().iter().zip(&record.increments) {
                rec.push_numbers(&[*t, *dy]);
            }
            tables.push(rec);
        }

        let mut audit = HygieneAudit::default();
        let mut drift: f64 = 0.0;
        for (traj, _, a) in &runs {
            audit.merge(a);
            drift = drift.max(purity_drift(&traj.times, &traj.moments));
        }
        let summary = json!({
            "n_realizations": n,
            "representation": if self.pure { "wavefunction" } else { "density" },
            "hygiene": hygiene_json(&audit),
            "purity_drift_per_time": json_f64(drift),
        });
        Ok(Outcome { tables, summary })
    }
}
