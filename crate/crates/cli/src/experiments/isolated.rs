use qcond_core::moments::MomentSet;
use qcond_core::qdyn::Propagator;
use qcond_core::state::GridState;
use qcond_core::stats::linear_fit;
use serde_json::{json, Value};

use super::{hygiene_json, moment_table, Common};
use crate::config::{self, Reader, RunBlock};
use crate::output::json_f64;
use crate::{CliError, Experiment, Outcome};

pub struct Isolated {
    common: Common,
    pure: bool,
}

impl Isolated {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let common = Common::read(r)?;
        let pure = config::pure_representation(r, "density")?;
        if pure && common.meas.strength > 0.0 {
            return Err(CliError::Config(
                "discarding the record with k > 0 needs state.representation = density".into(),
            ));
        }
        Ok(Isolated { common, pure })
    }
}

fn sampled<S: GridState>(
    prop: &mut Propagator,
    state: &mut S,
    run: &RunBlock,
    mut step: impl FnMut(&mut Propagator, &mut S, f64, f64) -> qcond_core::Result<()>,
) -> Result<(Vec<f64>, Vec<MomentSet>), CliError> {
    let mut times = vec![0.0];
    let mut moments = vec![state.moments(&prop.system, 0.0)];
    for n in 0..run.n_steps() {
        step(prop, state, run.dt, n as f64 * run.dt)?;
        if (n + 1) % run.sample_every == 0 {
            let t = (n + 1) as f64 * run.dt;
            times.push(t);
            moments.push(state.moments(&prop.system, t));
        }
    }
    Ok((times, moments))
}

impl Experiment for Isolated {
    fn execute(&self) -> Result<Outcome, CliError> {
        let c = &self.common;
        let mut prop = Propagator::new(c.grid, c.system, c.meas)?;
        let (times, moments) = if self.pure {
            let mut psi = c.wave_function()?;
            sampled(&mut prop, &mut psi, &c.run, |p, s, dt, t| p.isolated_step(s, dt, t))?
        } else {
            prop.positivity_every = 100;
            let mut rho = c.density()?;
            sampled(&mut prop, &mut rho, &c.run, |p, s, dt, t| p.unconditional_step(s, dt, t))?
        };
        let c_pp: Vec<f64> = moments.iter().map(|m| m.c_pp).collect();
        let fit = linear_fit(&times, &c_pp);
        let expected = 2.0 * c.meas.backaction_diffusion(c.system.hbar);
        let rate = fit.map_or(f64::NAN, |f| f.slope);
        let relative = if expected > 0.0 { json_f64((rate / expected - 1.0).abs()) } else { Value::Null };
        let summary = json!({
            "cpp_rate": json_f64(rate),
            "cpp_rate_error": json_f64(fit.map_or(f64::NAN, |f| f.slope_error)),
            "backaction_rate": expected,
            "relative_error": relative,
            "final": moments.last(),
            "hygiene": hygiene_json(&prop.audit),
        });
        Ok(Outcome { tables: vec![moment_table("moments", &times, &moments)], summary })
    }
}
