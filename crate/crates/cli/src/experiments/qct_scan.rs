use std::f64::consts::PI;

use qcond_core::cdyn::newton_trajectory;
use qcond_core::grid::PositionGrid;
use qcond_core::noise::WienerStream;
use qcond_core::qct::{window_center_strength, Percentiles, RegimeReport, DEFAULT_THRESHOLD};
use qcond_core::qdyn::{HygieneAudit, MeasurementSpec, Propagator};
use qcond_core::state::GridState;
use qcond_core::stats;
use qcond_core::system::SystemSpec;
use qcond_core::wavefn::WaveFunction;
use serde_json::{json, Value};

use super::{hygiene_json, indexed, label};
use crate::config::{self, Reader, RunBlock};
use crate::output::{json_f64, Cell, Table};
use crate::{CliError, Experiment, Outcome};

struct Tracking {
    periods: f64,
}

pub struct QctScan {
    system: SystemSpec,
    grid: PositionGrid,
    run: RunBlock,
    x0: f64,
    p0: f64,
    sigma_x: f64,
    strengths: Vec<f64>,
    threshold: f64,
    orbit_horizon: f64,
    action: Option<f64>,
    in_window_margin: f64,
    out_of_window_factor: f64,
    tracking: Option<Tracking>,
}

struct Track {
    rms: f64,
    trace: Vec<(f64, f64, f64)>,
    audit: HygieneAudit,
}

impl QctScan {
    pub fn read(r: &Reader) -> Result<Self, CliError> {
        let system = config::system(r)?;
        let grid = config::grid(r)?;
        let run = config::run_block(r)?;
        let x0 = r.f64_or("initial", "x0", 0.0)?;
        let p0 = r.f64_or("initial", "p0", 0.0)?;
        // coherent-state width of the local harmonic approximation at x0
        let curvature = system.force_derivatives(x0).0.abs();
        let coherent = if curvature > 0.0 {
            (system.hbar / (2.0 * (system.mass * curvature).sqrt())).sqrt()
        } else {
            1.0
        };
        let sigma_x = r.f64_or("initial", "sigma_x", coherent)?;
        let q = "qct";
        let strengths = r.list_f64(q, "strengths", &[])?;
        if strengths.iter().any(|k| !(*k > 0.0)) {
            return Err(CliError::Config("qct.strengths must all be positive".into()));
        }
        let threshold = r.f64_or(q, "threshold", DEFAULT_THRESHOLD)?;
        let orbit_horizon = r.f64_or(q, "orbit_horizon", run.horizon.max(20.0))?;
        let action = r.optional_f64(q, "action")?;
        let in_window_margin = r.f64_or(q, "in_window_margin", 1.2)?;
        let out_of_window_factor = r.f64_or(q, "out_of_window_factor", 10.0)?;
        let tracking = if r.bool_or(q, "track", false)? {
            Some(Tracking { periods: r.f64_or(q, "tracking_periods", 5.0)? })
        } else {
            None
        };
        Ok(QctScan {
            system,
            grid,
            run,
            x0,
            p0,
            sigma_x,
            strengths,
            threshold,
            orbit_horizon,
            action,
            in_window_margin,
            out_of_window_factor,
            tracking,
        })
    }

    fn tracking_horizon(&self, t: &Tracking) -> f64 {
        if self.system.drive_frequency > 0.0 {
            t.periods * 2.0 * PI / self.system.drive_frequency
        } else {
            self.run.horizon
        }
    }

    fn report(&self, k: f64, times: &[f64], orbit: &[(f64, f64)]) -> Result<RegimeReport, CliError> {
        Ok(RegimeReport::along_orbit(&self.system, k, times, orbit, self.action, self.threshold)?)
    }

    fn track(&self, k: f64, realization: usize, orbit: &[(f64, f64)], n_steps: usize) -> Result<Track, CliError> {
        let dt = self.run.dt;
        let mut prop = Propagator::new(self.grid, self.system, MeasurementSpec::new(k)?)?;
        let mut psi = WaveFunction::gaussian(self.grid, self.system.hbar, self.x0, self.p0, self.sigma_x)?;
        let mut noise = WienerStream::new(self.run.master_seed, realization as u64, dt)?;
        let mut sum_sq = 0.0;
        let mut trace = vec![(0.0, psi.mean_position(), orbit[0].0)];
        for s in 0..n_steps {
            prop.sme_step(&mut psi, dt, s as f64 * dt, noise.next_increment())?;
            let x = psi.mean_position();
            let d = x - orbit[s + 1].0;
            sum_sq += d * d;
            if (s + 1) % self.run.sample_every == 0 {
                trace.push(((s + 1) as f64 * dt, x, orbit[s + 1].0));
            }
        }
        Ok(Track { rms: (sum_sq / n_steps as f64).sqrt(), trace, audit: prop.audit })
    }
}

fn percentile_json(p: &Percentiles) -> Value {
    json!({ "p10": json_f64(p.p10), "p50": json_f64(p.p50), "p90": json_f64(p.p90) })
}

impl Experiment for QctScan {
    fn execute(&self) -> Result<Outcome, CliError> {
        let dt = self.run.dt;
        let track_steps = self.tracking.as_ref().map_or(0, |t| (self.tracking_horizon(t) / dt).round() as usize);
        let orbit_steps = ((self.orbit_horizon / dt).round() as usize).max(track_steps);
        let orbit = newton_trajectory(self.x0, self.p0, &self.system, dt, 0.0, orbit_steps);
        let times: Vec<f64> = (0..orbit.len()).map(|i| i as f64 * dt).collect();

        let (strengths, labels): (Vec<f64>, Vec<String>) = if self.strengths.is_empty() {
            // the left ratio grows like k and the right one like 1/k
            let k_c = window_center_strength(&self.system, &orbit);
            let center = self.report(k_c, &times, &orbit)?;
            let k_in = k_c * self.in_window_margin * self.threshold / center.window_left.p10;
            let k_out = k_c * center.window_right.p10 * self.out_of_window_factor / self.threshold;
            (vec![k_in, k_out], vec!["in_window".into(), "out_of_window".into()])
        } else {
            (self.strengths.clone(), self.strengths.iter().enumerate().map(|(i, _)| format!("k{i}")).collect())
        };

        let mut report_table = Table::new(
            "qct_report",
            &[
                ("label", "-"),
                ("k", "1/(length^2*time)"),
                ("s", "1"),
                ("localization_p10", "1"),
                ("localization_p50", "1"),
                ("localization_p90", "1"),
                ("lownoise_p10", "1"),
                ("lownoise_p50", "1"),
                ("lownoise_p90", "1"),
                ("window_left_p10", "1"),
                ("window_left_p50", "1"),
                ("window_left_p90", "1"),
                ("window_right_p10", "1"),
                ("window_right_p50", "1"),
                ("window_right_p90", "1"),
                ("window_open", "1"),
                ("localized", "1"),
            ],
        );
        let mut reports = Vec::new();
        for (k, name) in strengths.iter().zip(&labels) {
            let rep = self.report(*k, &times, &orbit)?;
            let mut row: Vec<Cell> = vec![name.as_str().into(), rep.strength.into(), rep.s.into()];
            for p in [&rep.localization, &rep.lownoise, &rep.window_left, &rep.window_right] {
                row.extend([p.p10.into(), p.p50.into(), p.p90.into()]);
            }
            row.push(f64::from(u8::from(rep.window_open())).into());
            row.push(f64::from(u8::from(rep.localized())).into());
            report_table.push(row);
            reports.push(rep);
        }

        let mut orbit_table = Table::new("qct_orbit", &[("t", "time"), ("x", "length"), ("p", "momentum")]);
        for (i, (x, p)) in orbit.iter().enumerate().step_by(self.run.sample_every) {
            orbit_table.push_numbers(&[times[i], *x, *p]);
        }
        let mut tables = vec![report_table, orbit_table];

        let mut entries: Vec<Value> = reports
            .iter()
            .zip(&labels)
            .map(|(rep, name)| {
                json!({
                    "label": name,
                    "k": rep.strength,
                    "s": rep.s,
                    "action_scale": rep.action_scale,
                    "localization": percentile_json(&rep.localization),
                    "lownoise": percentile_json(&rep.lownoise),
                    "window_left": percentile_json(&rep.window_left),
                    "window_right": percentile_json(&rep.window_right),
                    "window_open": rep.window_open(),
                    "localized": rep.localized(),
                })
            })
            .collect();
        let mut summary = json!({ "threshold": self.threshold, "sigma_x": self.sigma_x });

        if self.tracking.is_some() {
            let path = &orbit[..=track_steps];
            let (lo, hi) = path.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.0), b.max(q.0)));
            let amplitude = 0.5 * (hi - lo);
            let n = self.run.n_realizations.max(1);
            let runs = indexed(strengths.len() * n, |j| self.track(strengths[j / n], j % n, &orbit, track_steps))?;
            let mut table = Table::new(
                "qct_tracking",
                &[("label", "-"), ("k", "1/(length^2*time)"), ("realization", "1"), ("rms_deviation", "length"), ("relative_deviation", "1")],
            );
            let mut audit = HygieneAudit::default();
            let mut means = Vec::new();
            for (si, (k, name)) in strengths.iter().zip(&labels).enumerate() {
                let rel: Vec<f64> = (0..n).map(|i| runs[si * n + i].rms / amplitude).collect();
                for i in 0..n {
                    let run = &runs[si * n + i];
                    table.push(vec![name.as_str().into(), (*k).into(), i.into(), run.rms.into(), rel[i].into()]);
                    audit.merge(&run.audit);
                }
                let mut trace = Table::new(
                    format!("qct_track_{name}_{}", label(0)),
                    &[("t", "time"), ("x_mean", "length"), ("x_newton", "length")],
                );
                for (t, x, xn) in &runs[si * n].trace {
                    trace.push_numbers(&[*t, *x, *xn]);
                }
                tables.push(trace);
                let mean = stats::mean(&rel);
                means.push(mean);
                entries[si]["tracking"] = json!({
                    "relative_deviation": rel.iter().map(|v| json_f64(*v)).collect::<Vec<_>>(),
                    "mean_relative_deviation": json_f64(mean),
                    "max_relative_deviation": json_f64(rel.iter().copied().fold(0.0, f64::max)),
                });
            }
            tables.push(table);
            summary["tracking"] = json!({
                "horizon": track_steps as f64 * dt,
                "amplitude": amplitude,
                "n_realizations": n,
                "hygiene": hygiene_json(&audit),
            });
            if self.strengths.is_empty() {
                summary["tracking"]["deviation_ratio"] = json_f64(means[1] / means[0]);
            }
        }
        summary["strengths"] = Value::Array(entries);
        Ok(Outcome { tables, summary })
    }
}
