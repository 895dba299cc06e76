//! Pure states on the position grid.
//!
//! Ideal continuous measurement maps pure states to pure states, so a wave
//! function carries exactly the same conditioned dynamics as the rank-one
//! density matrix `|ψ⟩⟨ψ|` at `O(n log n)` instead of `O(n² log n)` per step.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{PositionGrid, Spectral};
use crate::moments::{self, MomentSet, RawMoments};
use crate::state::{GridState, Workspace};
use crate::system::SystemSpec;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: PositionGrid,
    psi: Vec<Complex64>,
}

impl WaveFunction {
    pub fn from_amplitudes(grid: PositionGrid, psi: Vec<Complex64>) -> Result<Self> {
        if psi.len() != grid.n_points {
            return Err(Error::LengthMismatch { expected: grid.n_points, got: psi.len() });
        }
        let mut wf = WaveFunction { grid, psi };
        wf.normalize();
        Ok(wf)
    }

    /// Minimum-uncertainty Gaussian packet
    /// `ψ(x) ∝ exp(−(x−x̄)²/4σ² + i p̄ x/ħ)`.
    pub fn gaussian(grid: PositionGrid, hbar: f64, x_mean: f64, p_mean: f64, sigma_x: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        if !(sigma_x > 2.0 * grid.dx()) {
            return Err(Error::GridTooCoarse(format!(
                "width {sigma_x} must exceed two grid spacings ({})",
                2.0 * grid.dx()
            )));
        }
        if !grid.contains(x_mean - 5.0 * sigma_x) || !grid.contains(x_mean + 5.0 * sigma_x) {
            return Err(Error::SupportEscape(format!(
                "x̄ ± 5σ = [{}, {}] leaves the grid [{}, {}]",
                x_mean - 5.0 * sigma_x,
                x_mean + 5.0 * sigma_x,
                grid.x_min,
                grid.x_max
            )));
        }
        let sigma_p = hbar / (2.0 * sigma_x);
        let p_edge = p_mean.abs() + 5.0 * sigma_p;
        if p_edge > grid.momentum_nyquist(hbar) {
            return Err(Error::GridTooCoarse(format!(
                "momentum extent {p_edge:.3} exceeds the grid Nyquist momentum {:.3}",
                grid.momentum_nyquist(hbar)
            )));
        }
        let psi = (0..grid.n_points)
            .map(|i| {
                let x = grid.x(i);
                let d = x - x_mean;
                Complex64::from_polar((-d * d / (4.0 * sigma_x * sigma_x)).exp(), p_mean * x / hbar)
            })
            .collect();
        let wf = Self::from_amplitudes(grid, psi)?;
        wf.check_support()?;
        Ok(wf)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `|⟨φ|ψ⟩|²`.
    pub fn overlap(&self, other: &WaveFunction) -> f64 {
        let s: Complex64 = self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum();
        (s * self.grid.dx()).norm_sqr()
    }

    fn raw_moments(&self, spectral: &Spectral, hbar: f64) -> RawMoments {
        let grid = &self.grid;
        let n = grid.n_points;
        let mut scratch = spectral.scratch();
        let mut phi = self.psi.clone();
        spectral.forward.process_with_scratch(&mut phi, &mut scratch);
        let kappa = grid.wavenumbers();
        let norm_k: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        let (mut p1, mut p2) = (0.0, 0.0);
        for (z, &k) in phi.iter().zip(&kappa) {
            let w = z.norm_sqr() / norm_k;
            p1 += hbar * k * w;
            p2 += hbar * hbar * k * k * w;
        }
        // pψ = F⁻¹(ħκ ψ̃); the Nyquist bin is dropped for this odd operator.
        let mut dpsi: Vec<Complex64> = phi
            .iter()
            .enumerate()
            .map(|(k, z)| if 2 * k == n { ZERO } else { z * (hbar * kappa[k]) })
            .collect();
        spectral.inverse.process_with_scratch(&mut dpsi, &mut scratch);
        let inv_n = 1.0 / n as f64;
        let (mut x1, mut x2, mut xp, mut tr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = grid.x(i);
            let d = self.psi[i].norm_sqr();
            x1 += x * d;
            x2 += x * x * d;
            xp += x * (self.psi[i].conj() * dpsi[i] * inv_n).re;
            tr += d;
        }
        RawMoments { x: x1 / tr, p: p1, xx: x2 / tr, xp: xp / tr, pp: p2 }
    }
}

impl GridState for WaveFunction {
    fn grid(&self) -> &PositionGrid {
        &self.grid
    }

    fn position_density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    fn apply_diagonal(&mut self, a: &[Complex64]) {
        for (z, a) in self.psi.iter_mut().zip(a) {
            *z *= a;
        }
    }

    fn apply_real_diagonal(&mut self, g: &[f64]) {
        for (z, g) in self.psi.iter_mut().zip(g) {
            *z *= g;
        }
    }

    fn apply_momentum_diagonal(&mut self, spectral: &Spectral, phase: &[Complex64], ws: &mut Workspace) {
        let need = spectral.scratch().len();
        if ws.fft.len() < need {
            ws.fft.resize(need, ZERO);
        }
        let inv_n = 1.0 / self.grid.n_points as f64;
        spectral.forward.process_with_scratch(&mut self.psi, &mut ws.fft);
        for (z, ph) in self.psi.iter_mut().zip(phase) {
            *z *= ph * inv_n;
        }
        spectral.inverse.process_with_scratch(&mut self.psi, &mut ws.fft);
    }

    fn normalize(&mut self) -> f64 {
        let tr = self.norm_sqr();
        if tr > 0.0 && tr.is_finite() {
            let s = 1.0 / tr.sqrt();
            for z in self.psi.iter_mut() {
                *z *= s;
            }
        }
        tr
    }

    fn moments(&self, spec: &SystemSpec, t: f64) -> MomentSet {
        let spectral = Spectral::shared(self.grid);
        let raw = self.raw_moments(&spectral, spec.hbar);
        let dx = self.grid.dx();
        let norm = self.norm_sqr();
        let v_mean: f64 = self
            .psi
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * spec.potential_at(self.grid.x(i), t) * dx)
            .sum::<f64>()
            / norm;
        moments::from_raw(raw, 1.0, spec.mass, v_mean)
    }

    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64) {
        for (z, f) in self.psi.iter_mut().zip(&fiducial.psi) {
            *z = f + (*z - f) * epsilon;
        }
        self.normalize();
    }

    fn displace(&mut self, shift: f64) {
        let spectral = Spectral::shared(self.grid);
        let mut scratch = spectral.scratch();
        let inv_n = 1.0 / self.grid.n_points as f64;
        spectral.forward.process_with_scratch(&mut self.psi, &mut scratch);
        for (z, k) in self.psi.iter_mut().zip(self.grid.wavenumbers()) {
            *z *= Complex64::from_polar(inv_n, -k * shift);
        }
        spectral.inverse.process_with_scratch(&mut self.psi, &mut scratch);
    }
}
