use qcond_core::lyap::{benettin_newton, ensemble_lyapunov, one_over_t_fit, separation_audit, DecayFit, LyapunovConfig, LyapunovSeries, QuantumTrajectory};
use qcond_core::qdyn::Propagator;
use qcond_core::stats::percentile;
use serde_json::{json, Value};

use super::{label, Common};
use crate::config::{self, Reader};
use crate::output::{json_f64, Table};
use crate::{CliError, Experiment, Outcome};

pub struct Lyapunov {
    common: Common,
    pure: bool,
    cfg: LyapunovConfig,
    plateau: (f64, f64),
    decay: (f64, f64),
    audit_half: bool,
}

impl Lyapunov {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let common = Common::read(r)?;
        let pure = config::pure_representation(r, "wavefunction")?;
        let l = "lyapunov";
        let run = common.run;
        let cfg = LyapunovConfig {
            initial_separation: r.f64_or(l, "initial_separation", common.initial.sigma_x / 10.0)?,
            n_realizations: run.n_realizations,
            horizon: run.horizon,
            dt: run.dt,
            sample_every: run.sample_every,
            renormalize_above: r.optional_f64(l, "renormalize_above")?,
            master_seed: run.master_seed,
        };
        cfg.validate()?;
        let plateau = (r.f64_or(l, "plateau_from", run.horizon / 2.0)?, r.f64_or(l, "plateau_to", run.horizon)?);
        let first = run.sample_every as f64 * run.dt;
        let decay = (r.f64_or(l, "decay_from", 10.0 * first)?, r.f64_or(l, "decay_to", run.horizon / 10.0)?);
        for (name, (lo, hi)) in [("plateau", plateau), ("decay", decay)] {
            if !(lo >= first && hi > lo && hi <= run.horizon) {
                return Err(CliError::Config(format!(
                    "lyapunov.{name}_from/{name}_to must satisfy {first} ≤ from < to ≤ run.horizon"
                )));
            }
        }
        let audit_half = r.bool_or(l, "separation_audit", false)?;
        Ok(Lyapunov { common, pure, cfg, plateau, decay, audit_half })
    }

    fn ensemble(&self, cfg: &LyapunovConfig) -> Result<LyapunovSeries, CliError> {
        let c = &self.common;
        let prop = || Propagator::new(c.grid, c.system, c.meas);
        Ok(if self.pure {
            ensemble_lyapunov(|_| Ok(QuantumTrajectory { prop: prop()?, state: c.wave_function()? }), cfg)?
        } else {
            ensemble_lyapunov(|_| Ok(QuantumTrajectory { prop: prop()?, state: c.density()? }), cfg)?
        })
    }
}

fn fit_json(fit: &DecayFit) -> Value {
    json!({
        "slope": json_f64(fit.slope),
        "intercept": json_f64(fit.intercept),
        "window": [fit.window.0, fit.window.1],
        "shrunk": fit.shrunk,
        "negative_fraction": fit.negative_fraction,
        "bins": fit.bins,
    })
}

/// `C = median(|λ|·t)` over the decay window, so `λ ≈ C/t` there.
pub(crate) fn decay_constant(times: &[f64], lambda: &[f64], window: (f64, f64)) -> f64 {
    let products: Vec<f64> = times
        .iter()
        .zip(lambda)
        .filter(|(t, l)| **t >= window.0 && **t <= window.1 && l.is_finite())
        .map(|(t, l)| l.abs() * t)
        .collect();
    if products.is_empty() {
        f64::NAN
    } else {
        percentile(&products, 50.0)
    }
}

impl Experiment for Lyapunov {
    fn execute(&self) -> Result<Outcome, CliError> {
        let c = &self.common;
        let series = self.ensemble(&self.cfg)?;

        let mut tables = Vec::new();
        let mut mean = Table::new("lyap_mean", &[("t", "time"), ("lambda_mean", "1/time"), ("lambda_sd", "1/time")]);
        for ((t, m), s) in series.times.iter().zip(&series.mean).zip(&series.sd) {
            mean.push_numbers(&[*t, *m, *s]);
        }
        tables.push(mean);
        for (i, real) in series.realizations.iter().enumerate() {
            let mut t = Table::new(
                format!("lyap_real_{}", label(i)),
                &[("t", "time"), ("delta", "length"), ("lambda", "1/time")],
            );
            for ((tm, d), l) in real.times.iter().zip(&real.delta).zip(&real.lambda) {
                t.push_numbers(&[*tm, *d, *l]);
            }
            tables.push(t);
        }

        let plateau = series.plateau(self.plateau.0, self.plateau.1)?;
        let plateau_fit = one_over_t_fit(&series.times, &series.mean, self.plateau)?;
        let decay_fit = one_over_t_fit(&series.times, &series.mean, self.decay)?;
        let constant = decay_constant(&series.times, &series.mean, self.decay);
        let crossover = if plateau.mean > 0.0 { json_f64(constant / plateau.mean) } else { Value::Null };
        let n_steps = self.cfg.n_steps();
        let newton = benettin_newton(&c.system, c.initial.x0, c.initial.p0, c.run.dt, n_steps, n_steps / 10);

        let mut summary = json!({
            "k": c.meas.strength,
            "n_realizations": self.cfg.n_realizations,
            "initial_separation": self.cfg.initial_separation,
            "band": "lambda_sd is the spread of λ_s(t) across realizations",
            "plateau": {
                "window": [self.plateau.0, self.plateau.1],
                "mean": json_f64(plateau.mean),
                "std_error": json_f64(plateau.std_error),
                "t_statistic": json_f64(plateau.mean / plateau.std_error),
                "per_realization": plateau.per_realization.iter().map(|v| json_f64(*v)).collect::<Vec<_>>(),
            },
            "plateau_fit": fit_json(&plateau_fit),
            "decay_fit": fit_json(&decay_fit),
            "decay_constant": json_f64(constant),
            "crossover_time": crossover,
            "excluded": series.excluded,
            "renormalizations": series.realizations.iter().map(|r| r.renormalizations).collect::<Vec<_>>(),
            "newton_lyapunov": json_f64(newton),
        });
        if self.audit_half {
            let half = LyapunovConfig { initial_separation: self.cfg.initial_separation / 2.0, ..self.cfg };
            let p_half = self.ensemble(&half)?.plateau(self.plateau.0, self.plateau.1)?;
            let (change, converged) = separation_audit(plateau.mean, p_half.mean);
            summary["separation_audit"] = json!({
                "plateau_half": json_f64(p_half.mean),
                "relative_change": json_f64(change),
                "converged": converged,
            });
        }
        Ok(Outcome { tables, summary })
    }
}
