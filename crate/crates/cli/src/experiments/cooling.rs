use qcond_core::feedback::{cooling_experiment, paired_gap, CoolingSchedule, FeedbackPolicy, Plant};
use serde_json::json;

use super::Common;
use crate::config::Reader;
use crate::output::{json_f64, Cell, Table};
use crate::{CliError, Experiment, Outcome};

pub struct Cooling {
    plant: Plant,
    policies: Vec<FeedbackPolicy>,
    schedule: CoolingSchedule,
}

impl Cooling {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let c = Common::read(r)?;
        let f = "feedback";
        let u_max = r.f64_or(f, "u_max", 50.0)?;
        let names = r.string_or(f, "policies", "none,direct,estimator")?;
        let direct_gain = r.f64_or(f, "direct_gain", -1.0)?;
        let smoothing_time = r.f64_or(f, "smoothing_time", 0.6)?;
        let estimator_gain = r.f64_or(f, "estimator_gain", 3.0)?;
        let belief_offset = r.f64_or(f, "belief_offset", 0.0)?;
        let mut policies = Vec::new();
        for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let policy = match name {
                "none" => FeedbackPolicy::none(),
                "direct" => FeedbackPolicy::direct(direct_gain, smoothing_time, u_max),
                "estimator" => FeedbackPolicy::estimator(estimator_gain, u_max),
                other => {
                    return Err(CliError::Config(format!(
                        "feedback.policies: unknown policy `{other}`; use none, direct or estimator"
                    )))
                }
            };
            if policies.iter().any(|p: &FeedbackPolicy| p.kind == policy.kind) {
                return Err(CliError::Config(format!("feedback.policies lists `{name}` twice")));
            }
            policy.validate(c.run.dt)?;
            policies.push(policy);
        }
        if policies.is_empty() {
            return Err(CliError::Config("feedback.policies is empty".into()));
        }
        let plant = Plant {
            system: c.system,
            measurement: c.meas,
            grid: c.grid,
            x0: c.initial.x0,
            p0: c.initial.p0,
            sigma0: c.initial.sigma_x,
            belief_offset,
        };
        let schedule = CoolingSchedule {
            dt: c.run.dt,
            horizon: c.run.horizon,
            sample_every: c.run.sample_every,
            n_realizations: c.run.n_realizations,
            master_seed: c.run.master_seed,
        };
        Ok(Cooling { plant, policies, schedule })
    }
}

impl Experiment for Cooling {
    fn execute(&self) -> Result<Outcome, CliError> {
        let ex = cooling_experiment(&self.plant, &self.policies, &self.schedule)?;
        let results = &ex.results;

        let mut columns = vec![("t".to_string(), "time".to_string())];
        for r in results {
            columns.push((format!("{}_mean", r.policy.kind.name()), "energy".into()));
            columns.push((format!("{}_sd", r.policy.kind.name()), "energy".into()));
        }
        let cols: Vec<(&str, &str)> = columns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut mean = Table::new("cooling_mean", &cols);
        for (j, t) in results[0].times.iter().enumerate() {
            let mut row = vec![*t];
            for r in results {
                row.extend([r.mean_energy[j], r.sd_energy[j]]);
            }
            mean.push_numbers(&row);
        }

        let mut summary_table = Table::new(
            "cooling_summary",
            &[
                ("policy", "-"),
                ("gain", "1"),
                ("smoothing_time", "time"),
                ("u_max", "force"),
                ("steady_mean", "energy"),
                ("steady_se", "energy"),
            ],
        );
        for r in results {
            summary_table.push(vec![
                r.policy.kind.name().into(),
                r.policy.gain.into(),
                r.policy.smoothing_time.into(),
                r.policy.u_max.into(),
                r.steady_mean.into(),
                r.steady_se.into(),
            ]);
        }

        let mut gaps = Table::new(
            "cooling_gaps",
            &[("higher", "-"), ("lower", "-"), ("gap", "energy"), ("gap_se", "energy"), ("z", "1")],
        );
        let mut gap_json = Vec::new();
        for pair in results.windows(2) {
            let (gap, se) = paired_gap(&pair[0], &pair[1])?;
            let (a, b) = (pair[0].policy.kind.name(), pair[1].policy.kind.name());
            gaps.push(vec![Cell::from(a), Cell::from(b), gap.into(), se.into(), (gap / se).into()]);
            gap_json.push(json!({ "higher": a, "lower": b, "gap": json_f64(gap), "se": json_f64(se), "z": json_f64(gap / se) }));
        }

        let summary = json!({
            "n_realizations": self.schedule.n_realizations,
            "steady_window": [self.schedule.horizon / 2.0, self.schedule.horizon],
            "policies": results.iter().map(|r| json!({
                "policy": r.policy.kind.name(),
                "gain": r.policy.gain,
                "smoothing_time": r.policy.smoothing_time,
                "u_max": r.policy.u_max,
                "steady_mean": json_f64(r.steady_mean),
                "steady_se": json_f64(r.steady_se),
            })).collect::<Vec<_>>(),
            "gaps": gap_json,
            "reruns": ex.reruns,
        });
        Ok(Outcome { tables: vec![mean, summary_table, gaps], summary })
    }
}
