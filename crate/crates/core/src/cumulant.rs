//! Centroid equations with a second-cumulant (Gaussian) closure.
//!
//! One step mirrors the grid propagator: an exact Gaussian measurement
//! update (Kalman gain form, plus the `2ħ²k dt` momentum diffusion in the
//! quantum flavor) followed by a kick–drift–kick of the means and the
//! linearized covariance. In the `dt → 0` limit this integrates
//!
//! ```text
//! dx̄ = p̄/m dt + √(8k) C_xx dW        dp̄ = ⟨F⟩ dt + √(8k) C_xp dW
//! Ċ_xx = 2C_xp/m − 8k C_xx²
//! Ċ_xp = C_pp/m + ⟨∂ₓF⟩C_xx − 8k C_xx C_xp
//! Ċ_pp = 2⟨∂ₓF⟩C_xp + 2ħ²k − 8k C_xp²
//! ```
//!
//! with `⟨F⟩ = F(x̄) + ½∂ₓ²F(x̄)C_xx` and `⟨∂ₓF⟩ = ∂ₓF(x̄) + ½∂ₓ³F(x̄)C_xx`,
//! and is exact for quadratic potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::qdyn::MeasurementSpec;
use crate::system::SystemSpec;

/// Relative slack allowed below the uncertainty floor `ħ²/4`.
pub const UNCERTAINTY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Flavor {
    /// Carries ħ: backaction diffusion and the uncertainty floor apply.
    Quantum { hbar: f64 },
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub x_mean: f64,
    pub p_mean: f64,
    pub c_xx: f64,
    pub c_xp: f64,
    pub c_pp: f64,
    pub flavor: Flavor,
    /// Include the `½∂ₓ²F·C_xx` correction in ⟨F⟩ (and `½∂ₓ³F·C_xx` in
    /// ⟨∂ₓF⟩).
    pub spread_correction: bool,
}

impl GaussianBelief {
    pub fn quantum(hbar: f64, x_mean: f64, p_mean: f64, c_xx: f64, c_xp: f64, c_pp: f64) -> Result<Self> {
        let b = GaussianBelief {
            x_mean,
            p_mean,
            c_xx,
            c_xp,
            c_pp,
            flavor: Flavor::Quantum { hbar },
            spread_correction: true,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn classical(x_mean: f64, p_mean: f64, c_xx: f64, c_xp: f64, c_pp: f64) -> Result<Self> {
        let b = GaussianBelief { x_mean, p_mean, c_xx, c_xp, c_pp, flavor: Flavor::Classical, spread_correction: true };
        b.validate()?;
        Ok(b)
    }

    /// Belief matching the first and second moments of a state.
    pub fn from_moments(m: &MomentSet, flavor: Flavor) -> Result<Self> {
        let b = GaussianBelief {
            x_mean: m.x_mean,
            p_mean: m.p_mean,
            c_xx: m.c_xx,
            c_xp: m.c_xp,
            c_pp: m.c_pp,
            flavor,
            spread_correction: true,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn determinant(&self) -> f64 {
        self.c_xx * self.c_pp - self.c_xp * self.c_xp
    }

    /// Positive semidefiniteness, and the uncertainty floor for the quantum
    /// flavor.
    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_mean, self.p_mean, self.c_xx, self.c_xp, self.c_pp];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::ClosureBreakdown("non-finite belief".into()));
        }
        let det = self.determinant();
        let scale = (self.c_xx * self.c_pp).abs().max(self.c_xp * self.c_xp);
        if self.c_xx < 0.0 || self.c_pp < 0.0 || det < -1e-10 * scale {
            return Err(Error::ClosureBreakdown(format!(
                "covariance lost positivity: C_xx={}, C_pp={}, det={det}",
                self.c_xx, self.c_pp
            )));
        }
        if let Flavor::Quantum { hbar } = self.flavor {
            let floor = hbar * hbar / 4.0;
            if det < floor * (1.0 - UNCERTAINTY_SLACK) {
                return Err(Error::ClosureBreakdown(format!("uncertainty product {det} below ħ²/4 = {floor}")));
            }
        }
        Ok(())
    }

    /// `⟨F⟩` and `⟨∂ₓF⟩` under the Gaussian closure.
    pub fn closed_force(&self, spec: &SystemSpec, t: f64) -> (f64, f64) {
        let (f1, f2, f3) = spec.force_derivatives(self.x_mean);
        let f = spec.force(self.x_mean, t);
        if self.spread_correction {
            (f + 0.5 * f2 * self.c_xx, f1 + 0.5 * f3 * self.c_xx)
        } else {
            (f, f1)
        }
    }

    /// Conditioning on one record increment, written in innovation form.
    fn condition(&mut self, meas: &MeasurementSpec, dt: f64, dw: f64) {
        let k = meas.strength;
        if k == 0.0 {
            return;
        }
        let a = 8.0 * k * dt;
        let denom = 1.0 + a * self.c_xx;
        let g = meas.gain() * dw / denom;
        self.x_mean += self.c_xx * g;
        self.p_mean += self.c_xp * g;
        self.c_pp -= a * self.c_xp * self.c_xp / denom;
        self.c_xx /= denom;
        self.c_xp /= denom;
        if let Flavor::Quantum { hbar } = self.flavor {
            self.c_pp += meas.backaction_diffusion(hbar) * 2.0 * dt;
        }
    }

    fn kick(&mut self, spec: &SystemSpec, h: f64, t: f64) {
        let (f, g) = self.closed_force(spec, t);
        self.p_mean += h * f;
        self.c_pp += 2.0 * g * h * self.c_xp + g * g * h * h * self.c_xx;
        self.c_xp += g * h * self.c_xx;
    }

    fn drift(&mut self, mass: f64, dt: f64) {
        let s = dt / mass;
        self.x_mean += s * self.p_mean;
        self.c_xx += 2.0 * s * self.c_xp + s * s * self.c_pp;
        self.c_xp += s * self.c_pp;
    }

    fn hamiltonian(&mut self, spec: &SystemSpec, dt: f64, t: f64) {
        let t_mid = t + 0.5 * dt;
        self.kick(spec, 0.5 * dt, t_mid);
        self.drift(spec.mass, dt);
        self.kick(spec, 0.5 * dt, t_mid);
    }

    /// One step driven by the Wiener increment `dw`; returns
    /// `dy = x̄ dt + dW/√(8k)` when `k > 0`.
    pub fn step(&mut self, spec: &SystemSpec, meas: &MeasurementSpec, dt: f64, t: f64, dw: f64) -> Result<Option<f64>> {
        let dy = if meas.strength > 0.0 { Some(meas.record_increment(self.x_mean, dt, dw)?) } else { None };
        self.condition(meas, dt, dw);
        self.hamiltonian(spec, dt, t);
        self.validate()?;
        Ok(dy)
    }

    /// One step driven by a record increment; returns the innovation.
    pub fn filter_step(&mut self, spec: &SystemSpec, meas: &MeasurementSpec, dt: f64, t: f64, dy: f64) -> Result<f64> {
        let dw = meas.innovation(dy, self.x_mean, dt)?;
        self.condition(meas, dt, dw);
        self.hamiltonian(spec, dt, t);
        self.validate()?;
        Ok(dw)
    }

    /// Moments of the Gaussian; `purity` is `ħ/(2√det)` for the quantum
    /// flavor and 1 for the classical one.
    pub fn moments(&self, spec: &SystemSpec, t: f64) -> MomentSet {
        let (x, c) = (self.x_mean, self.c_xx);
        let m2 = x * x + c;
        let m3 = x * x * x + 3.0 * x * c;
        let m4 = x.powi(4) + 6.0 * x * x * c + 3.0 * c * c;
        let v = &spec.potential;
        let potential = v[0] + (v[1] + spec.linear_term(t)) * x + v[2] * m2 + v[3] * m3 + v[4] * m4;
        let purity = match self.flavor {
            Flavor::Quantum { hbar } => hbar / (2.0 * self.determinant().sqrt()),
            Flavor::Classical => 1.0,
        };
        MomentSet {
            x_mean: x,
            p_mean: self.p_mean,
            c_xx: c,
            c_xp: self.c_xp,
            c_pp: self.c_pp,
            purity,
            energy: (self.c_pp + self.p_mean * self.p_mean) / (2.0 * spec.mass) + potential,
        }
    }
}

/// One centroid step as a pure function.
pub fn centroid_step(
    b: &GaussianBelief,
    spec: &SystemSpec,
    meas: &MeasurementSpec,
    dt: f64,
    t: f64,
    dw: f64,
) -> Result<GaussianBelief> {
    let mut next = *b;
    next.step(spec, meas, dt, t, dw)?;
    Ok(next)
}

/// Deviation of a belief trajectory from a full-state trajectory, per
/// tracked moment (x̄, p̄, C_xx, C_xp, C_pp).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    pub max_abs: [f64; 5],
    pub rms: [f64; 5],
    /// `max |Δ|` divided by the largest magnitude the full trajectory
    /// reaches in that moment.
    pub max_relative: [f64; 5],
}

impl CompareMetrics {
    pub fn worst_relative(&self) -> f64 {
        self.max_relative.iter().copied().fold(0.0, f64::max)
    }
}

pub fn belief_vs_full_compare(full: &[MomentSet], belief: &[MomentSet]) -> Result<CompareMetrics> {
    if full.len() != belief.len() {
        return Err(Error::LengthMismatch { expected: full.len(), got: belief.len() });
    }
    if full.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut max_abs = [0.0f64; 5];
    let mut sum_sq = [0.0f64; 5];
    let mut scale = [0.0f64; 5];
    for (a, b) in full.iter().zip(belief) {
        let (ta, tb) = (a.tracked(), b.tracked());
        for i in 0..5 {
            let d = (ta[i] - tb[i]).abs();
            max_abs[i] = max_abs[i].max(d);
            sum_sq[i] += d * d;
            scale[i] = scale[i].max(ta[i].abs());
        }
    }
    let n = full.len() as f64;
    let mut rms = [0.0; 5];
    let mut max_relative = [0.0; 5];
    for i in 0..5 {
        rms[i] = (sum_sq[i] / n).sqrt();
        max_relative[i] = if scale[i] > 0.0 { max_abs[i] / scale[i] } else { max_abs[i] };
    }
    Ok(CompareMetrics { max_abs, rms, max_relative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdyn::newton_trajectory;

    /// Stationary covariance of the harmonic Riccati flow found by
    /// bisection on `C_xp`: `Ċ_xx = 0` gives `C_xp = 4km C_xx²`, and
    /// `Ċ_pp = 0` reads `8k C_xp² + 2mω² C_xp − 2ħ²k = 0`.
    fn riccati_fixed_point(m: f64, omega: f64, hbar: f64, k: f64) -> (f64, f64, f64) {
        let f = |cxp: f64| 8.0 * k * cxp * cxp + 2.0 * m * omega * omega * cxp - 2.0 * hbar * hbar * k;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cxp = 0.5 * (lo + hi);
        let cxx = (cxp / (4.0 * k * m)).sqrt();
        let cpp = m * (m * omega * omega * cxx + 8.0 * k * cxx * cxp);
        (cxx, cxp, cpp)
    }

    #[test]
    fn covariance_relaxes_to_the_riccati_fixed_point() {
        let (m, omega, hbar, k) = (1.0, 1.0, 1.0, 1.0);
        let spec = SystemSpec::harmonic(m, hbar, omega).unwrap();
        let meas = MeasurementSpec::new(k).unwrap();
        let (cxx, cxp, cpp) = riccati_fixed_point(m, omega, hbar, k);
        // start at twice the stationary C_xx on the uncertainty floor
        let c0 = 2.0 * cxx;
        let mut b = GaussianBelief::quantum(hbar, 0.0, 0.0, c0, 0.0, hbar * hbar / (4.0 * c0)).unwrap();
        // the approach is a damped oscillation, so monotonicity is checked on
        // its envelope: the largest gap in each unit-time window
        let dt = 1e-5;
        let window = 100_000;
        let mut envelopes = Vec::new();
        let mut peak: f64 = 0.0;
        for s in 0..2_000_000 {
            b.step(&spec, &meas, dt, s as f64 * dt, 0.0).unwrap();
            peak = peak.max((b.c_xx - cxx).abs());
            if (s + 1) % window == 0 {
                envelopes.push(peak);
                peak = 0.0;
            }
        }
        for pair in envelopes.windows(2) {
            assert!(pair[1] <= pair[0] || pair[1] < 1e-4 * cxx, "envelope grew: {pair:?}");
        }
        assert!((b.c_xx - cxx).abs() < 1e-4 * cxx, "C_xx {} vs {cxx}", b.c_xx);
        assert!((b.c_xp - cxp).abs() < 1e-4 * cxp);
        assert!((b.c_pp - cpp).abs() < 1e-4 * cpp);
    }

    #[test]
    fn delta_belief_moves_ballistically() {
        let spec = SystemSpec::classical(2.0, &[0.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
        let meas = MeasurementSpec::new(3.0).unwrap();
        let mut b = GaussianBelief::classical(0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        b.step(&SystemSpec::classical(2.0, &[]).unwrap(), &meas, 0.1, 0.0, 0.7).unwrap();
        assert_eq!((b.x_mean, b.p_mean), (0.05, 1.0));
        // with a force, a delta belief follows the Newtonian leapfrog exactly
        let mut b = GaussianBelief::classical(1.0, 0.5, 0.0, 0.0, 0.0).unwrap();
        let newton = newton_trajectory(1.0, 0.5, &spec, 0.01, 0.0, 100);
        for s in 0..100 {
            b.step(&spec, &meas, 0.01, s as f64 * 0.01, 0.3).unwrap();
        }
        assert_eq!((b.x_mean, b.p_mean), newton[100]);
    }

    #[test]
    fn unmeasured_classical_belief_follows_newton() {
        let spec = SystemSpec::classical(1.0, &[0.0, 0.0, -1.0, 0.0, 0.25]).unwrap().with_drive(0.3, 1.2);
        let meas = MeasurementSpec::new(0.0).unwrap();
        let mut b = GaussianBelief::classical(0.5, 0.0, 0.0, 0.0, 0.0).unwrap();
        let newton = newton_trajectory(0.5, 0.0, &spec, 0.01, 0.0, 500);
        for s in 0..500 {
            b.step(&spec, &meas, 0.01, s as f64 * 0.01, 0.0).unwrap();
        }
        assert_eq!((b.x_mean, b.p_mean), newton[500]);
    }

    #[test]
    fn quantum_belief_stays_on_the_uncertainty_floor() {
        let spec = SystemSpec::new(1.0, 0.5, &[0.0, 0.0, -1.0, 0.0, 0.1]).unwrap();
        let meas = MeasurementSpec::new(2.0).unwrap();
        let mut b = GaussianBelief::quantum(0.5, 1.0, 0.0, 0.2, 0.0, 0.25 * 0.25 / 0.2).unwrap();
        let mut noise = crate::noise::WienerStream::new(4, 0, 1e-3).unwrap();
        for s in 0..5000 {
            b.step(&spec, &meas, 1e-3, s as f64 * 1e-3, noise.next_increment()).unwrap();
            assert!((b.determinant() / (0.0625) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn compare_rejects_length_mismatch() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let b = GaussianBelief::quantum(1.0, 0.0, 0.0, 1.0, 0.0, 0.25).unwrap().moments(&spec, 0.0);
        assert!(matches!(
            belief_vs_full_compare(&[b, b], &[b]),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
        let m = belief_vs_full_compare(&[b], &[b]).unwrap();
        assert_eq!(m.worst_relative(), 0.0);
    }

    #[test]
    fn gaussian_energy_matches_the_grid() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let b = GaussianBelief::quantum(1.0, 0.0, 0.0, 1.0, 0.0, 0.25).unwrap();
        assert!((b.moments(&spec, 0.0).energy - 0.625).abs() < 1e-15);
        assert!(GaussianBelief::quantum(1.0, 0.0, 0.0, 1.0, 0.0, 0.2).is_err());
    }
}
