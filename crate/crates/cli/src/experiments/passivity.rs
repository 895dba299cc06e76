use qcond_core::cdyn::{liouville_step, ClassicalEnsemble, KsRunner};
use qcond_core::noise::WienerStream;
use qcond_core::qdyn::{HygieneAudit, Propagator};
use qcond_core::state::GridState;
use qcond_core::stats;
use serde_json::json;

use super::{hygiene_json, indexed, Common};
use crate::config::{self, Reader};
use crate::output::{json_f64, Table};
use crate::{CliError, Experiment, Outcome};

const NAMES: [(&str, &str); 5] = [
    ("x", "length"),
    ("p", "momentum"),
    ("xx", "length^2"),
    ("xp", "length*momentum"),
    ("pp", "momentum^2"),
];

enum Flavor {
    Quantum { pure: bool },
    Classical { particles: usize, sigma_p: f64 },
}

pub struct Passivity {
    common: Common,
    flavor: Flavor,
    checkpoints: usize,
}

/// Raw moments at each checkpoint.
type Samples = Vec<[f64; 5]>;

impl Passivity {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let common = Common::read(r)?;
        if common.meas.strength == 0.0 {
            return Err(CliError::Config("the averaging check needs measurement.k > 0".into()));
        }
        let flavor = match r.choice("passivity", "flavor", &["quantum", "classical"], "quantum")?.as_str() {
            "quantum" => Flavor::Quantum { pure: config::pure_representation(r, "wavefunction")? },
            _ => {
                let particles = r.usize_or("passivity", "particles", 2000)?;
                let hbar = common.system.hbar;
                let sigma_p = match r.optional_f64("initial", "sigma_p")? {
                    Some(s) => s,
                    None if hbar > 0.0 => hbar / (2.0 * common.initial.sigma_x),
                    None => return Err(CliError::Config("a classical system needs initial.sigma_p".into())),
                };
                Flavor::Classical { particles, sigma_p }
            }
        };
        let checkpoints = r.usize_or("passivity", "checkpoints", 5)?;
        if checkpoints == 0 || checkpoints > common.run.n_steps() {
            return Err(CliError::Config("passivity.checkpoints must lie between 1 and the step count".into()));
        }
        if common.run.n_realizations < 2 {
            return Err(CliError::Config("the averaging check needs run.n_realizations ≥ 2".into()));
        }
        Ok(Passivity { common, flavor, checkpoints })
    }

    fn checkpoint_steps(&self) -> Vec<usize> {
        let n = self.common.run.n_steps();
        (1..=self.checkpoints).map(|j| (j * n + self.checkpoints / 2) / self.checkpoints).collect()
    }

    /// Runs `step` for the whole horizon, sampling raw moments at the
    /// checkpoints.
    fn sample<S>(
        &self,
        state: &mut S,
        mut step: impl FnMut(&mut S, f64, f64) -> Result<(), CliError>,
        mut raw: impl FnMut(&S, f64) -> Result<[f64; 5], CliError>,
    ) -> Result<Samples, CliError> {
        let dt = self.common.run.dt;
        let marks = self.checkpoint_steps();
        let mut out = Vec::with_capacity(marks.len());
        let mut next = 0;
        for n in 0..*marks.last().unwrap() {
            step(state, dt, n as f64 * dt)?;
            if n + 1 == marks[next] {
                out.push(raw(state, (n + 1) as f64 * dt)?);
                next += 1;
            }
        }
        Ok(out)
    }

    fn quantum_run<S: GridState>(&self, mut state: S, i: usize) -> Result<(Samples, HygieneAudit), CliError> {
        let c = &self.common;
        let mut prop = Propagator::new(c.grid, c.system, c.meas)?;
        let mut noise = WienerStream::new(c.run.master_seed, i as u64, c.run.dt)?;
        let spec = c.system;
        let samples = self.sample(
            &mut state,
            |s, dt, t| Ok(prop.sme_step(s, dt, t, noise.next_increment()).map(|_| ())?),
            |s, t| Ok(s.moments(&spec, t).raw().as_array()),
        )?;
        Ok((samples, prop.audit))
    }

    fn initial_ensemble(&self, particles: usize, sigma_p: f64) -> Result<ClassicalEnsemble, CliError> {
        let c = &self.common;
        let i = c.initial;
        Ok(ClassicalEnsemble::sample_gaussian(particles, i.x0, i.p0, i.sigma_x, sigma_p, c.run.master_seed, 0)?)
    }
}

impl Experiment for Passivity {
    fn execute(&self) -> Result<Outcome, CliError> {
        let c = &self.common;
        let spec = c.system;
        let n = c.run.n_realizations;
        let mut audit = HygieneAudit::default();
        let mut extra = json!({});
        let (reference, runs): (Samples, Vec<Samples>) = match self.flavor {
            Flavor::Quantum { pure } => {
                let mut prop = Propagator::new(c.grid, c.system, c.meas)?;
                prop.positivity_every = 100;
                let mut rho = c.density()?;
                let reference = self.sample(
                    &mut rho,
                    |s, dt, t| Ok(prop.unconditional_step(s, dt, t)?),
                    |s, t| Ok(s.moments(&spec, t).raw().as_array()),
                )?;
                audit.merge(&prop.audit);
                let runs = indexed(n, |i| {
                    if pure {
                        self.quantum_run(c.wave_function()?, i)
                    } else {
                        self.quantum_run(c.density()?, i)
                    }
                })?;
                let mut samples = Vec::with_capacity(n);
                for (s, a) in runs {
                    audit.merge(&a);
                    samples.push(s);
                }
                (reference, samples)
            }
            Flavor::Classical { particles, sigma_p } => {
                let mut ens = self.initial_ensemble(particles, sigma_p)?;
                let reference = self.sample(
                    &mut ens,
                    |e, dt, t| {
                        liouville_step(e, &spec, dt, t);
                        Ok(())
                    },
                    |e, t| Ok(e.moments(&spec, t)?.raw().as_array()),
                )?;
                let runs = indexed(n, |i| {
                    let mut ens = self.initial_ensemble(particles, sigma_p)?;
                    let mut runner = KsRunner::new(spec, c.meas, c.run.master_seed, i as u64);
                    let mut noise = WienerStream::new(c.run.master_seed, i as u64, c.run.dt)?;
                    let s = self.sample(
                        &mut ens,
                        |e, dt, t| Ok(runner.step(e, dt, t, noise.next_increment()).map(|_| ())?),
                        |e, t| Ok(e.moments(&spec, t)?.raw().as_array()),
                    )?;
                    Ok((s, runner.resamples))
                })?;
                extra = json!({ "particles": particles, "resamples": runs.iter().map(|r| r.1).sum::<u64>() });
                (reference, runs.into_iter().map(|r| r.0).collect())
            }
        };

        let mut columns: Vec<(String, String)> = vec![("t".into(), "time".into())];
        for (name, unit) in NAMES {
            for (suffix, u) in [("reference", unit), ("average", unit), ("se", unit), ("z", "1")] {
                columns.push((format!("{name}_{suffix}"), u.to_string()));
            }
        }
        let cols: Vec<(&str, &str)> = columns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut table = Table::new("passivity", &cols);
        let mut worst = [0.0f64; 5];
        for (j, step) in self.checkpoint_steps().into_iter().enumerate() {
            let mut row = vec![step as f64 * c.run.dt];
            for q in 0..5 {
                let xs: Vec<f64> = runs.iter().map(|r| r[j][q]).collect();
                let (avg, se) = (stats::mean(&xs), stats::std_error(&xs));
                let z = (avg - reference[j][q]) / se;
                worst[q] = worst[q].max(z.abs());
                row.extend([reference[j][q], avg, se, z]);
            }
            table.push_numbers(&row);
        }
        let max_z = worst.iter().copied().fold(0.0, f64::max);
        let mut summary = json!({
            "flavor": match self.flavor { Flavor::Quantum { .. } => "quantum", Flavor::Classical { .. } => "classical" },
            "n_realizations": n,
            "checkpoints": self.checkpoints,
            "max_abs_z": json_f64(max_z),
            "max_abs_z_per_moment": NAMES.iter().zip(worst).map(|((n, _), z)| (n.to_string(), json_f64(z))).collect::<serde_json::Map<_, _>>(),
            "within_3se": max_z < 3.0,
            "hygiene": hygiene_json(&audit),
        });
        if let (Some(s), Some(e)) = (summary.as_object_mut(), extra.as_object()) {
            s.extend(e.clone());
        }
        Ok(Outcome { tables: vec![table], summary })
    }
}
