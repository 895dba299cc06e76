//! Quantum evolution on the position grid: isolated (von Neumann),
//! unconditioned open (measurement averaged out), and conditioned on a
//! continuous position-measurement record.
//!
//! The unitary part is a symmetric split-operator step
//! `e^{-iV dt/2ħ} e^{-iT dt/ħ} e^{-iV dt/2ħ}` with `V` evaluated at the
//! midpoint time. The measurement part of one step is the Gaussian
//! operation
//!
//! ```text
//! ρ(x₁,x₂) ← exp(−2k dt [(x₁−r)² + (x₂−r)²]) ρ(x₁,x₂) / tr,   r = dy/dt
//! ```
//!
//! with `dy = ⟨x⟩dt + dW/√(8k)`. To Itô order this is
//! `−k[x,[x,ρ]]dt + √(2k){x−⟨x⟩, ρ}dW`, whose Wigner image is the
//! backaction diffusion `ħ²k ∂ₚ²f` plus the conditioning term
//! `√(8k)(x−⟨x⟩)f dW`. It maps pure states to pure states and positive
//! operators to positive operators for any step size.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PositionGrid, Spectral};
use crate::moments::MomentSet;
use crate::noise::WienerStream;
use crate::state::{GridState, QuantumState, StepCheck, Workspace};
use crate::system::SystemSpec;

/// Upper bound on `8k·C_xx·dt` for a conditioned step.
pub const MEASUREMENT_STEP_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    /// Measurement strength `k`, in 1/(length²·time).
    pub strength: f64,
}

impl MeasurementSpec {
    pub fn new(strength: f64) -> Result<Self> {
        if !(strength >= 0.0) || !strength.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "measurement strength must be non-negative, got {strength}"
            )));
        }
        Ok(MeasurementSpec { strength })
    }

    /// Backaction momentum diffusion `D_BA = ħ²k`.
    pub fn backaction_diffusion(&self, hbar: f64) -> f64 {
        hbar * hbar * self.strength
    }

    /// `√(8k)`, the gain of both the record noise and the innovation.
    pub fn gain(&self) -> f64 {
        (8.0 * self.strength).sqrt()
    }

    /// `dy = ⟨x⟩dt + dW/√(8k)`.
    pub fn record_increment(&self, x_mean: f64, dt: f64, dw: f64) -> Result<f64> {
        if self.strength == 0.0 {
            return Err(Error::NoRecord);
        }
        Ok(x_mean * dt + dw / self.gain())
    }

    /// Inverse of [`MeasurementSpec::record_increment`]: `dW = √(8k)(dy − ⟨x⟩dt)`.
    pub fn innovation(&self, dy: f64, x_mean: f64, dt: f64) -> Result<f64> {
        if self.strength == 0.0 {
            return Err(Error::NoRecord);
        }
        Ok(self.gain() * (dy - x_mean * dt))
    }
}

/// Increments `dy` of a measurement record, sampled every `dt` from `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub t0: f64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// End time of each increment.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.increments.len()).map(|n| self.t0 + n as f64 * self.dt).collect()
    }
}

/// Running maxima of the per-step state checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HygieneAudit {
    pub steps: u64,
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub eigen_checks: u64,
}

impl Default for HygieneAudit {
    fn default() -> Self {
        HygieneAudit {
            steps: 0,
            max_trace_error: 0.0,
            max_hermiticity_defect: 0.0,
            min_eigenvalue: f64::INFINITY,
            eigen_checks: 0,
        }
    }
}

impl HygieneAudit {
    fn record(&mut self, check: &StepCheck) {
        self.steps += 1;
        self.max_trace_error = self.max_trace_error.max(check.trace_error);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(check.hermiticity_defect);
        if let Some(e) = check.min_eigenvalue {
            self.min_eigenvalue = self.min_eigenvalue.min(e);
            self.eigen_checks += 1;
        }
    }

    pub fn merge(&mut self, other: &HygieneAudit) {
        self.steps += other.steps;
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(other.max_hermiticity_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.eigen_checks += other.eigen_checks;
    }
}

/// Stepper for one trajectory: owns FFT scratch and cached phase tables.
#[derive(Debug, Clone)]
pub struct Propagator {
    spectral: Arc<Spectral>,
    pub system: SystemSpec,
    pub measurement: MeasurementSpec,
    ws: Workspace,
    xs: Vec<f64>,
    kinetic_dt: f64,
    kinetic: Vec<Complex64>,
    decoherence_key: (f64, f64),
    decoherence: Vec<f64>,
    diag: Vec<Complex64>,
    /// Run a full eigenvalue check every this many steps (0 disables).
    pub positivity_every: u64,
    pub audit: HygieneAudit,
}

impl Propagator {
    pub fn new(grid: PositionGrid, system: SystemSpec, measurement: MeasurementSpec) -> Result<Self> {
        system.validate()?;
        if !system.is_quantum() {
            return Err(Error::InvalidParameter("quantum propagation needs hbar > 0".into()));
        }
        let spectral = Spectral::shared(grid);
        let ws = Workspace::for_spectral(&spectral);
        Ok(Propagator {
            spectral,
            system,
            measurement,
            ws,
            xs: grid.xs(),
            kinetic_dt: f64::NAN,
            kinetic: Vec::new(),
            decoherence_key: (f64::NAN, f64::NAN),
            decoherence: Vec::new(),
            diag: vec![Complex64::new(0.0, 0.0); grid.n_points],
            positivity_every: 0,
            audit: HygieneAudit::default(),
        })
    }

    pub fn grid(&self) -> &PositionGrid {
        &self.spectral.grid
    }

    fn ensure_kinetic(&mut self, dt: f64) {
        if self.kinetic_dt.to_bits() == dt.to_bits() {
            return;
        }
        let scale = self.system.hbar * dt / (2.0 * self.system.mass);
        self.kinetic = self
            .spectral
            .grid
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -scale * k * k))
            .collect();
        self.kinetic_dt = dt;
    }

    /// Fills `diag` with the half-step potential phase times an optional
    /// real measurement factor.
    fn fill_potential_phase(&mut self, dt: f64, t: f64, kraus: Option<&[f64]>) {
        let t_mid = t + 0.5 * dt;
        let scale = -0.5 * dt / self.system.hbar;
        for (i, (d, &x)) in self.diag.iter_mut().zip(&self.xs).enumerate() {
            let g = kraus.map_or(1.0, |k| k[i]);
            *d = Complex64::from_polar(g, scale * self.system.potential_at(x, t_mid));
        }
    }

    /// Measurement factor `exp(−2k dt (x − r)²)`, shifted so that it equals
    /// one at `x = x_ref` (the overall constant drops out on renormalization).
    fn kraus_factors(&self, dt: f64, dy: f64, x_ref: f64) -> Vec<f64> {
        let k = self.measurement.strength;
        let r = dy / dt;
        let c = 2.0 * k * dt;
        self.xs
            .iter()
            .map(|&x| (-c * ((x * x - x_ref * x_ref) - 2.0 * r * (x - x_ref))).exp())
            .collect()
    }

    fn unitary_with<S: GridState>(&mut self, state: &mut S, dt: f64, t: f64, kraus: Option<&[f64]>) {
        self.ensure_kinetic(dt);
        self.fill_potential_phase(dt, t, kraus);
        state.apply_diagonal(&self.diag);
        state.apply_momentum_diagonal(&self.spectral, &self.kinetic, &mut self.ws);
        if kraus.is_some() {
            self.fill_potential_phase(dt, t, None);
        }
        state.apply_diagonal(&self.diag);
    }

    fn finish<S: GridState>(&mut self, state: &mut S) -> Result<()> {
        let check_pos = self.positivity_every > 0 && (self.audit.steps + 1).is_multiple_of(self.positivity_every);
        let check = state.finish_step(check_pos)?;
        self.audit.record(&check);
        state.check_support()
    }

    /// One isolated step from `t` to `t + dt`. A negative `dt` (with `t`
    /// set to the later time) exactly undoes a forward step.
    pub fn isolated_step<S: GridState>(&mut self, state: &mut S, dt: f64, t: f64) -> Result<()> {
        self.unitary_with(state, dt, t, None);
        self.finish(state)
    }

    /// Checks `8k·C_xx·dt` against [`MEASUREMENT_STEP_BOUND`].
    fn check_measurement_step(&self, density: &[f64], x_mean: f64, dt: f64) -> Result<()> {
        let dx = self.grid().dx();
        let var: f64 = density
            .iter()
            .zip(&self.xs)
            .map(|(p, x)| p * (x - x_mean) * (x - x_mean) * dx)
            .sum();
        let load = 8.0 * self.measurement.strength * var * dt;
        if load >= MEASUREMENT_STEP_BOUND {
            return Err(Error::StepTooLarge(format!(
                "8k·C_xx·dt = {load:.3} exceeds {MEASUREMENT_STEP_BOUND}"
            )));
        }
        Ok(())
    }

    /// Record-driven step: condition on `dy`, then evolve unitarily.
    /// Returns the innovation `dW` implied by the record.
    pub fn filter_step<S: GridState>(&mut self, state: &mut S, dt: f64, t: f64, dy: f64) -> Result<f64> {
        let density = state.position_density();
        let dx = self.grid().dx();
        let x_mean: f64 = density.iter().zip(&self.xs).map(|(p, x)| p * x * dx).sum();
        self.check_measurement_step(&density, x_mean, dt)?;
        let dw = self.measurement.innovation(dy, x_mean, dt)?;
        let kraus = self.kraus_factors(dt, dy, x_mean);
        self.unitary_with(state, dt, t, Some(&kraus));
        self.finish(state)?;
        Ok(dw)
    }

    /// Conditioned step driven by the Wiener increment `dw`; returns the
    /// emitted record increment `dy`.
    pub fn sme_step<S: GridState>(&mut self, state: &mut S, dt: f64, t: f64, dw: f64) -> Result<f64> {
        let x_mean = state.mean_position();
        let dy = self.measurement.record_increment(x_mean, dt, dw)?;
        self.filter_step(state, dt, t, dy)?;
        Ok(dy)
    }

    /// Conditioned step when `k > 0`, isolated step otherwise.
    pub fn advance<S: GridState>(&mut self, state: &mut S, dt: f64, t: f64, dw: f64) -> Result<Option<f64>> {
        if self.measurement.strength == 0.0 {
            self.isolated_step(state, dt, t)?;
            Ok(None)
        } else {
            self.sme_step(state, dt, t, dw).map(Some)
        }
    }

    /// Unconditioned open step: backaction decoherence
    /// `ρ(x₁,x₂) ← e^{−k dt (x₁−x₂)²} ρ(x₁,x₂)` followed by the unitary step.
    pub fn unconditional_step(&mut self, state: &mut QuantumState, dt: f64, t: f64) -> Result<()> {
        let k = self.measurement.strength;
        if k > 0.0 {
            let n = self.grid().n_points;
            if self.decoherence_key != (k, dt) {
                let dx = self.grid().dx();
                self.decoherence = (0..n)
                    .map(|d| (-k * dt * (d as f64 * dx).powi(2)).exp())
                    .collect();
                self.decoherence_key = (k, dt);
            }
            let rho = state.matrix_mut();
            for i in 0..n {
                for j in 0..n {
                    rho[i * n + j] *= self.decoherence[i.abs_diff(j)];
                }
            }
        }
        self.isolated_step(state, dt, t)
    }
}

/// One isolated step as a pure function.
pub fn isolated_step(state: &QuantumState, spec: &SystemSpec, dt: f64, t: f64) -> Result<QuantumState> {
    let mut prop = Propagator::new(*state.grid_ref(), *spec, MeasurementSpec { strength: 0.0 })?;
    let mut next = state.clone();
    prop.isolated_step(&mut next, dt, t)?;
    Ok(next)
}

/// One conditioned step as a pure function; returns the new state and `dy`.
pub fn sme_step(state: &QuantumState, spec: &SystemSpec, meas: &MeasurementSpec, dt: f64, t: f64, dw: f64) -> Result<(QuantumState, f64)> {
    let mut prop = Propagator::new(*state.grid_ref(), *spec, *meas)?;
    let mut next = state.clone();
    let dy = prop.sme_step(&mut next, dt, t, dw)?;
    Ok((next, dy))
}

/// One unconditioned open step as a pure function.
pub fn unconditional_step(state: &QuantumState, spec: &SystemSpec, meas: &MeasurementSpec, dt: f64, t: f64) -> Result<QuantumState> {
    let mut prop = Propagator::new(*state.grid_ref(), *spec, *meas)?;
    let mut next = state.clone();
    prop.unconditional_step(&mut next, dt, t)?;
    Ok(next)
}

/// Moments sampled along a run, tagged with their times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<MomentSet>,
}

impl MomentTrajectory {
    fn with_capacity(n: usize) -> Self {
        MomentTrajectory { times: Vec::with_capacity(n), moments: Vec::with_capacity(n) }
    }

    fn push(&mut self, t: f64, m: MomentSet) {
        self.times.push(t);
        self.moments.push(m);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn x_means(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.x_mean).collect()
    }
}

/// Runs a conditioned trajectory from `state`, returning sampled moments
/// (every `sample_every` steps, including `t0`) and the generated record.
pub fn simulate_conditioned<S: GridState>(
    prop: &mut Propagator,
    state: &mut S,
    noise: &mut WienerStream,
    t0: f64,
    n_steps: usize,
    sample_every: usize,
) -> Result<(MomentTrajectory, MeasurementRecord)> {
    let dt = noise.dt();
    let every = sample_every.max(1);
    let mut traj = MomentTrajectory::with_capacity(n_steps / every + 1);
    let mut record = MeasurementRecord { t0, dt, increments: Vec::with_capacity(n_steps) };
    traj.push(t0, state.moments(&prop.system, t0));
    for n in 0..n_steps {
        let t = t0 + n as f64 * dt;
        let dw = noise.next_increment();
        let dy = prop.sme_step(state, dt, t, dw)?;
        record.increments.push(dy);
        if (n + 1) % every == 0 {
            let t1 = t0 + (n + 1) as f64 * dt;
            traj.push(t1, state.moments(&prop.system, t1));
        }
    }
    Ok((traj, record))
}

/// Integrates the conditioned evolution from a known record, reconstructing
/// each innovation from the filter's own running ⟨x⟩. Fed the record of a
/// run that started from the same state, it retraces that run exactly.
pub fn filter_with_record<S: GridState>(
    prop: &mut Propagator,
    state: &mut S,
    record: &MeasurementRecord,
    dt: f64,
    sample_every: usize,
) -> Result<MomentTrajectory> {
    if prop.measurement.strength == 0.0 {
        return Err(Error::NoRecord);
    }
    if (record.dt - dt).abs() > 1e-12 * dt.abs() {
        return Err(Error::StepMismatch { expected: dt, got: record.dt });
    }
    let every = sample_every.max(1);
    let mut traj = MomentTrajectory::with_capacity(record.len() / every + 1);
    traj.push(record.t0, state.moments(&prop.system, record.t0));
    for (n, &dy) in record.increments.iter().enumerate() {
        let t = record.t0 + n as f64 * dt;
        prop.filter_step(state, dt, t, dy)?;
        if (n + 1) % every == 0 {
            let t1 = record.t0 + (n + 1) as f64 * dt;
            traj.push(t1, state.moments(&prop.system, t1));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;
    use crate::wavefn::WaveFunction;

    fn grid() -> PositionGrid {
        PositionGrid::centered(8.0, 128).unwrap()
    }

    #[test]
    fn harmonic_centroid_follows_analytic_orbit() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let (x0, p0) = (1.5, 0.5);
        let mut s = QuantumState::gaussian(grid(), 1.0, x0, p0, 1.0 / 2f64.sqrt()).unwrap();
        let mut prop = Propagator::new(grid(), spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
        let dt = 2.0 * std::f64::consts::PI / 2000.0;
        let mut worst: f64 = 0.0;
        for n in 0..20000 {
            prop.isolated_step(&mut s, dt, n as f64 * dt).unwrap();
            if (n + 1) % 500 == 0 {
                let t = (n + 1) as f64 * dt;
                let exact = x0 * t.cos() + p0 * t.sin();
                worst = worst.max((s.mean_position() - exact).abs());
            }
        }
        assert!(worst < 1e-4, "max centroid error {worst}");
        assert!(prop.audit.max_trace_error < 1e-9);
        assert!(prop.audit.max_hermiticity_defect < 1e-12);
    }

    #[test]
    fn free_particle_spreading() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0]).unwrap();
        let mut s = QuantumState::gaussian(grid(), 1.0, 0.0, 0.0, 0.6).unwrap();
        let m0 = s.moments(&spec, 0.0);
        let mut prop = Propagator::new(grid(), spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
        let dt = 1e-3;
        for n in 0..1000 {
            prop.isolated_step(&mut s, dt, n as f64 * dt).unwrap();
        }
        let t = 1.0;
        let expected = m0.c_xx + m0.c_pp * t * t + 2.0 * m0.c_xp * t;
        let got = s.moments(&spec, t).c_xx;
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn backward_steps_undo_forward_steps() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, -1.0, 0.0, 0.25])
            .unwrap()
            .with_drive(0.5, 2.0);
        let psi = WaveFunction::gaussian(grid(), 1.0, 0.7, -0.4, 0.7).unwrap();
        let mut s = QuantumState::from_pure(&psi);
        let mut prop = Propagator::new(grid(), spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
        let dt = 2e-3;
        for n in 0..200 {
            prop.isolated_step(&mut s, dt, n as f64 * dt).unwrap();
        }
        for n in (0..200).rev() {
            prop.isolated_step(&mut s, -dt, (n + 1) as f64 * dt).unwrap();
        }
        assert!(s.fidelity_with_pure(&psi) > 1.0 - 1e-8);
    }

    #[test]
    fn zero_strength_unconditional_equals_isolated() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.3).unwrap();
        let s = QuantumState::gaussian(grid(), 1.0, 0.5, 0.2, 0.9).unwrap();
        let a = isolated_step(&s, &spec, 0.01, 0.0).unwrap();
        let b = unconditional_step(&s, &spec, &MeasurementSpec::new(0.0).unwrap(), 0.01, 0.0).unwrap();
        assert!(a.max_difference(&b) < 1e-12);
    }

    #[test]
    fn record_arithmetic() {
        let meas = MeasurementSpec::new(0.125).unwrap();
        assert_eq!(meas.record_increment(0.0, 1e-3, 0.01).unwrap(), 0.01);
        assert_eq!(MeasurementSpec::new(10.0).unwrap().backaction_diffusion(1.0), 10.0);
        assert!(matches!(MeasurementSpec::new(0.0).unwrap().record_increment(0.0, 1e-3, 0.01), Err(Error::NoRecord)));
        assert!(MeasurementSpec::new(-1.0).is_err());
    }

    #[test]
    fn conditioning_keeps_pure_states_pure() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, -1.0, 0.0, 0.25]).unwrap();
        let mut s = QuantumState::gaussian(grid(), 1.0, 1.0, 0.0, 0.7).unwrap();
        let mut prop = Propagator::new(grid(), spec, MeasurementSpec::new(1.0).unwrap()).unwrap();
        prop.positivity_every = 100;
        let dt = 1e-3;
        let mut noise = noise::WienerStream::new(5, 0, dt).unwrap();
        for n in 0..1000 {
            prop.sme_step(&mut s, dt, n as f64 * dt, noise.next_increment()).unwrap();
        }
        assert!((s.purity() - 1.0).abs() < 1e-6, "purity {}", s.purity());
        assert!(prop.audit.min_eigenvalue > -1e-8);
        assert_eq!(prop.audit.eigen_checks, 10);
    }

    #[test]
    fn record_refiltering_retraces_the_run() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let meas = MeasurementSpec::new(0.5).unwrap();
        let s0 = QuantumState::gaussian(grid(), 1.0, 1.0, 0.0, 0.8).unwrap();
        let dt = 2e-3;
        let mut prop = Propagator::new(grid(), spec, meas).unwrap();
        let mut s = s0.clone();
        let mut noise = noise::WienerStream::new(11, 2, dt).unwrap();
        let (traj, record) = simulate_conditioned(&mut prop, &mut s, &mut noise, 0.0, 300, 10).unwrap();
        let mut prop2 = Propagator::new(grid(), spec, meas).unwrap();
        let mut s2 = s0.clone();
        let refit = filter_with_record(&mut prop2, &mut s2, &record, dt, 10).unwrap();
        for (a, b) in traj.moments.iter().zip(&refit.moments) {
            assert!((a.x_mean - b.x_mean).abs() <= 1e-10 * a.x_mean.abs().max(1e-300));
        }
        assert!(matches!(filter_with_record(&mut prop2, &mut s0.clone(), &record, 1e-3, 10), Err(Error::StepMismatch { .. })));
        let mut prop0 = Propagator::new(grid(), spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
        assert!(matches!(filter_with_record(&mut prop0, &mut s0.clone(), &record, dt, 10), Err(Error::NoRecord)));
    }

    #[test]
    fn pure_and_mixed_representations_agree() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, -1.0, 0.0, 0.25]).unwrap().with_drive(0.3, 1.5);
        let psi0 = WaveFunction::gaussian(grid(), 1.0, 1.0, 0.2, 0.7).unwrap();
        let mut psi = psi0.clone();
        let mut rho = QuantumState::from_pure(&psi0);
        let meas = MeasurementSpec::new(0.7).unwrap();
        let mut pa = Propagator::new(grid(), spec, meas).unwrap();
        let mut pb = Propagator::new(grid(), spec, meas).unwrap();
        let dt = 1e-3;
        let mut noise = noise::WienerStream::new(3, 0, dt).unwrap();
        for n in 0..500 {
            let dw = noise.next_increment();
            let t = n as f64 * dt;
            let a = pa.sme_step(&mut psi, dt, t, dw).unwrap();
            let b = pb.sme_step(&mut rho, dt, t, dw).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rho.max_difference(&QuantumState::from_pure(&psi)) < 1e-10);
    }

    #[test]
    fn escaping_state_is_rejected() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0]).unwrap();
        let mut s = WaveFunction::gaussian(grid(), 1.0, 0.0, 5.0, 0.7).unwrap();
        let mut prop = Propagator::new(grid(), spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
        let mut err = None;
        for n in 0..2000 {
            if let Err(e) = prop.isolated_step(&mut s, 1e-3, n as f64 * 1e-3) {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(Error::SupportEscape(_))));
    }
}
