//! Closed-loop control of the measured particle.
//!
//! The actuator is a linear force: the control `u` enters the potential as
//! `−u·x`. A controller sees the record through step `n` and its output
//! acts during step `n + 1`.

use serde::{Deserialize, Serialize};

use crate::cumulant::GaussianBelief;
use crate::error::{Error, Result};
use crate::grid::PositionGrid;
use crate::noise::WienerStream;
use crate::qdyn::{MeasurementSpec, Propagator};
use crate::state::GridState;
use crate::stats;
use crate::system::SystemSpec;
use crate::wavefn::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    None,
    Direct,
    Estimator,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::Direct => "direct",
            PolicyKind::Estimator => "estimator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub kind: PolicyKind,
    pub gain: f64,
    /// Low-pass time constant of the current estimate (direct kind).
    pub smoothing_time: f64,
    /// Actuation limit `|u| ≤ u_max`.
    pub u_max: f64,
}

impl FeedbackPolicy {
    pub fn none() -> Self {
        FeedbackPolicy { kind: PolicyKind::None, gain: 0.0, smoothing_time: 0.0, u_max: 0.0 }
    }

    pub fn direct(gain: f64, smoothing_time: f64, u_max: f64) -> Self {
        FeedbackPolicy { kind: PolicyKind::Direct, gain, smoothing_time, u_max }
    }

    pub fn estimator(gain: f64, u_max: f64) -> Self {
        FeedbackPolicy { kind: PolicyKind::Estimator, gain, smoothing_time: 0.0, u_max }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.u_max >= 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParameter("u_max must be ≥ 0 and the gain finite".into()));
        }
        if self.kind == PolicyKind::Direct && !(self.smoothing_time >= 5.0 * dt) {
            return Err(Error::InvalidParameter(format!(
                "smoothing time {} must be at least 5·dt = {}",
                self.smoothing_time,
                5.0 * dt
            )));
        }
        Ok(())
    }

    fn clamp(&self, u: f64) -> f64 {
        u.clamp(-self.u_max, self.u_max)
    }
}

/// Photocurrent feedback: `u = −g·I`, where `I` is `dy/dt` low-passed
/// with time constant `τ_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectController {
    pub policy: FeedbackPolicy,
    pub current: f64,
}

impl DirectController {
    pub fn new(policy: FeedbackPolicy) -> Self {
        DirectController { policy, current: 0.0 }
    }

    /// Folds in one record increment and returns the next control.
    pub fn update(&mut self, dy: f64, dt: f64) -> f64 {
        self.current += (dy - self.current * dt) / self.policy.smoothing_time;
        self.policy.clamp(-self.policy.gain * self.current)
    }
}

/// Momentum damping from a Gaussian belief: `u = −g·p̄`.
pub fn estimator_control(belief: &GaussianBelief, policy: &FeedbackPolicy) -> f64 {
    policy.clamp(-policy.gain * belief.p_mean)
}

/// The controlled system and its initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub system: SystemSpec,
    pub measurement: MeasurementSpec,
    pub grid: PositionGrid,
    pub x0: f64,
    pub p0: f64,
    pub sigma0: f64,
    /// Offset of the estimator's initial mean from the true one.
    pub belief_offset: f64,
}

impl Plant {
    /// `H₀ = p²/2m + V(x)` without drive or control.
    pub fn bare_system(&self) -> SystemSpec {
        let mut s = self.system;
        s.drive_amplitude = 0.0;
        s.control = 0.0;
        s
    }
}

/// Energy trajectory of one closed-loop realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRun {
    pub energy: Vec<f64>,
    pub max_control: f64,
}

/// Integrates one realization under `policy` on noise stream `stream_index`.
/// Energies are sampled every `sample_every` steps, starting at `t = 0`.
pub fn closed_loop(
    plant: &Plant,
    policy: &FeedbackPolicy,
    dt: f64,
    n_steps: usize,
    sample_every: usize,
    seed: u64,
    stream_index: u64,
) -> Result<LoopRun> {
    policy.validate(dt)?;
    let hbar = plant.system.hbar;
    let bare = plant.bare_system();
    let mut system = plant.system;
    system.control = 0.0;
    let mut prop = Propagator::new(plant.grid, system, plant.measurement)?;
    let mut psi = WaveFunction::gaussian(plant.grid, hbar, plant.x0, plant.p0, plant.sigma0)?;
    let mut noise = WienerStream::new(seed, stream_index, dt)?;
    let c0 = plant.sigma0 * plant.sigma0;
    let mut belief = GaussianBelief::quantum(
        hbar,
        plant.x0 + plant.belief_offset,
        plant.p0,
        c0,
        0.0,
        hbar * hbar / (4.0 * c0),
    )?;
    let mut direct = DirectController::new(*policy);
    let every = sample_every.max(1);
    let mut energy = Vec::with_capacity(n_steps / every + 1);
    energy.push(psi.moments(&bare, 0.0).energy);
    let mut u = 0.0;
    let mut max_control: f64 = 0.0;
    let grid_scale = plant.grid.length();
    for s in 0..n_steps {
        let t = s as f64 * dt;
        prop.system.control = u;
        max_control = max_control.max(u.abs());
        let dw = noise.next_increment();
        let dy = prop.sme_step(&mut psi, dt, t, dw)?;
        u = match policy.kind {
            PolicyKind::None => 0.0,
            PolicyKind::Direct => direct.update(dy, dt),
            PolicyKind::Estimator => {
                let mut seen = plant.system;
                seen.control = prop.system.control;
                belief.filter_step(&seen, &plant.measurement, dt, t, dy)?;
                if belief.c_xx.sqrt() > grid_scale || belief.x_mean.abs() > grid_scale {
                    return Err(Error::EstimatorDiverged(format!(
                        "belief x̄ = {}, C_xx = {} at t = {t}",
                        belief.x_mean, belief.c_xx
                    )));
                }
                estimator_control(&belief, policy)
            }
        };
        if (s + 1) % every == 0 {
            energy.push(psi.moments(&bare, t + dt).energy);
        }
    }
    Ok(LoopRun { energy, max_control })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingResult {
    pub policy: FeedbackPolicy,
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub sd_energy: Vec<f64>,
    /// Each realization's mean energy over the second half of the horizon.
    pub steady: Vec<f64>,
    pub steady_mean: f64,
    pub steady_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingExperiment {
    pub results: Vec<CoolingResult>,
    /// `(realization, stream index)` for realizations rerun after an abort.
    pub reruns: Vec<(usize, u64)>,
}

/// Attempts per realization before an abort is reported as an error.
pub const MAX_ATTEMPTS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
    pub n_realizations: usize,
    pub master_seed: u64,
}

/// Runs every policy on the same per-realization noise streams. If any
/// policy aborts on realization `i`, all policies are rerun for it on
/// stream `i + n·attempt`, keeping the comparison paired.
pub fn cooling_experiment(plant: &Plant, policies: &[FeedbackPolicy], sched: &CoolingSchedule) -> Result<CoolingExperiment> {
    if sched.n_realizations < 2 {
        return Err(Error::InvalidParameter("need at least two realizations".into()));
    }
    let n_steps = (sched.horizon / sched.dt).round() as usize;
    let n = sched.n_realizations as u64;
    let realization = |i: usize| -> Result<(Vec<LoopRun>, Option<u64>)> {
        let mut last_err = None;
        for attempt in 0..MAX_ATTEMPTS {
            let stream = i as u64 + n * attempt;
            let runs: Result<Vec<LoopRun>> = policies
                .iter()
                .map(|p| closed_loop(plant, p, sched.dt, n_steps, sched.sample_every, sched.master_seed, stream))
                .collect();
            match runs {
                Ok(r) => return Ok((r, (attempt > 0).then_some(stream))),
                Err(e) if e.is_numerical() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    };
    #[cfg(feature = "parallel")]
    let slots: Vec<Result<(Vec<LoopRun>, Option<u64>)>> = {
        use rayon::prelude::*;
        (0..sched.n_realizations).into_par_iter().map(realization).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let slots: Vec<Result<(Vec<LoopRun>, Option<u64>)>> = (0..sched.n_realizations).map(realization).collect();
    let slots = slots.into_iter().collect::<Result<Vec<_>>>()?;
    let reruns = slots
        .iter()
        .enumerate()
        .filter_map(|(i, (_, s))| s.map(|s| (i, s)))
        .collect();
    let n_samples = slots[0].0[0].energy.len();
    let times: Vec<f64> = (0..n_samples).map(|j| (j * sched.sample_every) as f64 * sched.dt).collect();
    let half = sched.horizon / 2.0;
    let steady_idx: Vec<usize> = (0..n_samples).filter(|&j| times[j] >= half).collect();
    let results = policies
        .iter()
        .enumerate()
        .map(|(pi, policy)| {
            let runs: Vec<&LoopRun> = slots.iter().map(|(r, _)| &r[pi]).collect();
            let mut mean_energy = Vec::with_capacity(n_samples);
            let mut sd_energy = Vec::with_capacity(n_samples);
            for j in 0..n_samples {
                let col: Vec<f64> = runs.iter().map(|r| r.energy[j]).collect();
                mean_energy.push(stats::mean(&col));
                sd_energy.push(stats::std_dev(&col));
            }
            let steady: Vec<f64> = runs
                .iter()
                .map(|r| steady_idx.iter().map(|&j| r.energy[j]).sum::<f64>() / steady_idx.len() as f64)
                .collect();
            CoolingResult {
                policy: *policy,
                times: times.clone(),
                mean_energy,
                sd_energy,
                steady_mean: stats::mean(&steady),
                steady_se: stats::std_error(&steady),
                steady,
            }
        })
        .collect();
    Ok(CoolingExperiment { results, reruns })
}

/// Mean and standard error of the paired difference `a − b` of steady
/// energies over common realizations.
pub fn paired_gap(a: &CoolingResult, b: &CoolingResult) -> Result<(f64, f64)> {
    if a.steady.len() != b.steady.len() {
        return Err(Error::LengthMismatch { expected: a.steady.len(), got: b.steady.len() });
    }
    let d: Vec<f64> = a.steady.iter().zip(&b.steady).map(|(x, y)| x - y).collect();
    Ok((stats::mean(&d), stats::std_error(&d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_controller_examples() {
        let policy = FeedbackPolicy::direct(2.0, 0.05, 100.0);
        let mut c = DirectController::new(policy);
        for _ in 0..100 {
            assert_eq!(c.update(0.0, 1e-3), 0.0);
        }
        let mut c = DirectController::new(policy);
        let (rate, dt) = (1.5, 1e-3);
        let mut u = 0.0;
        for _ in 0..(3.0 * 0.05 / dt) as usize {
            u = c.update(rate * dt, dt);
        }
        // 1 − e^{−3} of the way after three time constants
        assert!((u / (-2.0 * rate) - (1.0 - (-3.0f64).exp())).abs() < 2e-2);
        for _ in 0..2000 {
            u = c.update(rate * dt, dt);
        }
        assert!((u + 2.0 * rate).abs() < 1e-9);
    }

    #[test]
    fn estimator_control_examples() {
        let policy = FeedbackPolicy::estimator(1.5, 10.0);
        let mut b = GaussianBelief::quantum(1.0, 0.0, 0.0, 1.0, 0.0, 0.25).unwrap();
        assert_eq!(estimator_control(&b, &policy), 0.0);
        b.p_mean = 2.0;
        assert_eq!(estimator_control(&b, &policy), -3.0);
        b.p_mean = 20.0;
        assert_eq!(estimator_control(&b, &policy), -10.0);
    }

    #[test]
    fn rejects_fast_smoothing() {
        assert!(FeedbackPolicy::direct(1.0, 4e-3, 1.0).validate(1e-3).is_err());
        assert!(FeedbackPolicy::direct(1.0, 5e-3, 1.0).validate(1e-3).is_ok());
    }

    fn plant() -> Plant {
        Plant {
            system: SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap(),
            measurement: MeasurementSpec::new(0.5).unwrap(),
            grid: PositionGrid::centered(10.0, 128).unwrap(),
            x0: 1.0,
            p0: 0.0,
            sigma0: std::f64::consts::FRAC_1_SQRT_2,
            belief_offset: 0.0,
        }
    }

    #[test]
    fn zero_gain_matches_no_feedback() {
        let p = plant();
        let none = closed_loop(&p, &FeedbackPolicy::none(), 1e-3, 2000, 100, 5, 0).unwrap();
        let direct = closed_loop(&p, &FeedbackPolicy::direct(0.0, 0.05, 10.0), 1e-3, 2000, 100, 5, 0).unwrap();
        let est = closed_loop(&p, &FeedbackPolicy::estimator(0.0, 10.0), 1e-3, 2000, 100, 5, 0).unwrap();
        for ((a, b), c) in none.energy.iter().zip(&direct.energy).zip(&est.energy) {
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn no_actuation_authority_means_no_effect() {
        let p = plant();
        let none = closed_loop(&p, &FeedbackPolicy::none(), 1e-3, 2000, 100, 5, 0).unwrap();
        let est = closed_loop(&p, &FeedbackPolicy::estimator(3.0, 0.0), 1e-3, 2000, 100, 5, 0).unwrap();
        assert_eq!(none.energy, est.energy);
        assert_eq!(est.max_control, 0.0);
    }
}
