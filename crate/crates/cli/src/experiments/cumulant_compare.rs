use qcond_core::cumulant::{belief_vs_full_compare, Flavor, GaussianBelief};
use qcond_core::moments::MomentSet;
use qcond_core::noise::WienerStream;
use qcond_core::qdyn::{HygieneAudit, Propagator};
use qcond_core::state::GridState;
use serde_json::json;

use super::{hygiene_json, indexed, label, Common};
use crate::config::{self, Reader};
use crate::output::{json_f64, Table};
use crate::{CliError, Experiment, Outcome};

pub struct CumulantCompare {
    common: Common,
    pure: bool,
    write_realizations: usize,
}

struct Pair {
    times: Vec<f64>,
    full: Vec<MomentSet>,
    belief: Vec<MomentSet>,
    audit: HygieneAudit,
}

impl CumulantCompare {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let common = Common::read(r)?;
        let pure = config::pure_representation(r, "wavefunction")?;
        let write_realizations = r.usize_or("compare", "write_realizations", 1)?;
        Ok(CumulantCompare { common, pure, write_realizations })
    }

    fn one<S: GridState>(&self, mut state: S, i: usize) -> Result<Pair, CliError> {
        let c = &self.common;
        let spec = c.system;
        let mut prop = Propagator::new(c.grid, spec, c.meas)?;
        let mut noise = WienerStream::new(c.run.master_seed, i as u64, c.run.dt)?;
        let m0 = state.moments(&spec, 0.0);
        let mut belief = GaussianBelief::from_moments(&m0, Flavor::Quantum { hbar: spec.hbar })?;
        let mut pair = Pair { times: vec![0.0], full: vec![m0], belief: vec![belief.moments(&spec, 0.0)], audit: HygieneAudit::default() };
        let dt = c.run.dt;
        for n in 0..c.run.n_steps() {
            let t = n as f64 * dt;
            let dw = noise.next_increment();
            prop.advance(&mut state, dt, t, dw)?;
            belief.step(&spec, &c.meas, dt, t, dw)?;
            if (n + 1) % c.run.sample_every == 0 {
                let t1 = (n + 1) as f64 * dt;
                pair.times.push(t1);
                pair.full.push(state.moments(&spec, t1));
                pair.belief.push(belief.moments(&spec, t1));
            }
        }
        pair.audit = prop.audit;
        Ok(pair)
    }
}

impl Experiment for CumulantCompare {
    fn execute(&self) -> Result<Outcome, CliError> {
        let c = &self.common;
        let n = c.run.n_realizations.max(1);
        let pairs = indexed(n, |i| if self.pure { self.one(c.wave_function()?, i) } else { self.one(c.density()?, i) })?;

        let mut tables = Vec::new();
        let mut metrics = Table::new(
            "compare_metrics",
            &[
                ("realization", "1"),
                ("worst_relative", "1"),
                ("rel_x_mean", "1"),
                ("rel_p_mean", "1"),
                ("rel_c_xx", "1"),
                ("rel_c_xp", "1"),
                ("rel_c_pp", "1"),
            ],
        );
        let mut audit = HygieneAudit::default();
        let mut worst: f64 = 0.0;
        for (i, p) in pairs.iter().enumerate() {
            let m = belief_vs_full_compare(&p.full, &p.belief)?;
            worst = worst.max(m.worst_relative());
            let mut row = vec![i as f64, m.worst_relative()];
            row.extend(m.max_relative);
            metrics.push_numbers(&row);
            audit.merge(&p.audit);
            if i < self.write_realizations {
                let mut t = Table::new(
                    format!("compare_real_{}", label(i)),
                    &[
                        ("t", "time"),
                        ("full_x_mean", "length"),
                        ("full_p_mean", "momentum"),
                        ("full_c_xx", "length^2"),
                        ("full_c_xp", "length*momentum"),
                        ("full_c_pp", "momentum^2"),
                        ("belief_x_mean", "length"),
                        ("belief_p_mean", "momentum"),
                        ("belief_c_xx", "length^2"),
                        ("belief_c_xp", "length*momentum"),
                        ("belief_c_pp", "momentum^2"),
                    ],
                );
                for ((tm, f), b) in p.times.iter().zip(&p.full).zip(&p.belief) {
                    let mut row = vec![*tm];
                    row.extend(f.tracked());
                    row.extend(b.tracked());
                    t.push_numbers(&row);
                }
                tables.push(t);
            }
        }
        tables.insert(0, metrics);
        let summary = json!({
            "n_realizations": n,
            "worst_relative": json_f64(worst),
            "hygiene": hygiene_json(&audit),
        });
        Ok(Outcome { tables, summary })
    }
}
