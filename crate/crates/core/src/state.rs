//! Density matrices on a position grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{PositionGrid, Spectral, ESCAPE_TOLERANCE};
use crate::moments::{self, ForceMoments, MomentSet, RawMoments};
use crate::system::SystemSpec;
use crate::wavefn::WaveFunction;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Eigenvalues between this floor and zero are treated as roundoff and
/// clipped; anything lower aborts the integration.
pub const POSITIVITY_FLOOR: f64 = -1e-8;

/// Operations every grid representation (pure or mixed) supports, so the
/// steppers can be written once.
pub trait GridState: Clone + Send {
    fn grid(&self) -> &PositionGrid;

    /// Probability density on the grid points; sums to 1 with weight `dx`.
    fn position_density(&self) -> Vec<f64>;

    fn mean_position(&self) -> f64 {
        let grid = self.grid();
        let dx = grid.dx();
        self.position_density()
            .iter()
            .enumerate()
            .map(|(i, p)| grid.x(i) * p * dx)
            .sum()
    }

    /// Multiplies by the diagonal operator `diag(a)` on both sides
    /// (`ρ → A ρ A†`, `ψ → A ψ`).
    fn apply_diagonal(&mut self, a: &[Complex64]);

    /// Real diagonal variant of [`GridState::apply_diagonal`].
    fn apply_real_diagonal(&mut self, g: &[f64]);

    /// Applies the momentum-diagonal operator `F⁻¹ diag(phase) F`.
    fn apply_momentum_diagonal(&mut self, spectral: &Spectral, phase: &[Complex64], ws: &mut Workspace);

    /// Rescales to unit trace and returns the trace found beforehand.
    fn normalize(&mut self) -> f64;

    fn moments(&self, spec: &SystemSpec, t: f64) -> MomentSet;

    /// Pull this state toward `fiducial`: `s ← fid + ε (s − fid)`, renormalized.
    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64);

    /// Translates the state by `shift` in position.
    fn displace(&mut self, shift: f64);

    /// Probability inside the guard bands at both grid edges.
    fn escape_mass(&self) -> f64 {
        let grid = self.grid();
        let g = grid.guard_points();
        let n = grid.n_points;
        let dens = self.position_density();
        let edge: f64 = dens[..g].iter().chain(dens[n - g..].iter()).sum();
        edge * grid.dx()
    }

    /// Renormalizes and, for density matrices, restores Hermiticity and
    /// optionally repairs roundoff-level negative eigenvalues.
    fn finish_step(&mut self, check_positivity: bool) -> Result<StepCheck> {
        let _ = check_positivity;
        self.normalize();
        let trace_error = (self.position_density().iter().sum::<f64>() * self.grid().dx() - 1.0).abs();
        Ok(StepCheck { trace_error, hermiticity_defect: 0.0, min_eigenvalue: None })
    }

    fn check_support(&self) -> Result<()> {
        let mass = self.escape_mass();
        if mass > ESCAPE_TOLERANCE || !mass.is_finite() {
            return Err(Error::SupportEscape(format!(
                "{mass:.3e} of the probability lies in the outer {}% of the grid",
                (crate::grid::GUARD_FRACTION * 100.0) as u32
            )));
        }
        Ok(())
    }

    fn force_moments(&self, spec: &SystemSpec, t: f64) -> ForceMoments {
        let grid = self.grid();
        let dx = grid.dx();
        let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
        for (i, p) in self.position_density().iter().enumerate() {
            let x = grid.x(i);
            let w = p * dx;
            m1 += w * x;
            m2 += w * x * x;
            m3 += w * x * x * x;
        }
        moments::force_from_position_moments(spec, t, m1, m2, m3)
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub fft: Vec<Complex64>,
    pub buf: Vec<Complex64>,
}

impl Workspace {
    pub fn for_spectral(spectral: &Spectral) -> Self {
        Workspace { fft: spectral.scratch(), buf: Vec::new() }
    }

    fn ensure_fft(&mut self, spectral: &Spectral) {
        let need = spectral.scratch().len();
        if self.fft.len() < need {
            self.fft.resize(need, ZERO);
        }
    }
}

/// Density matrix `ρ(x₁,x₂)`, stored row-major with `rho[i*n + j] = ρ(xᵢ,xⱼ)`.
/// Unit trace means `Σ ρ(x,x) dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    grid: PositionGrid,
    rho: Vec<Complex64>,
}

impl QuantumState {
    pub fn from_matrix(grid: PositionGrid, rho: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_points;
        if rho.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: rho.len() });
        }
        Ok(QuantumState { grid, rho })
    }

    pub fn from_pure(psi: &WaveFunction) -> Self {
        let grid = *psi.grid();
        let n = grid.n_points;
        let amp = psi.amplitudes();
        let mut rho = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                rho[i * n + j] = amp[i] * amp[j].conj();
            }
        }
        QuantumState { grid, rho }
    }

    /// Incoherent mixture `Σ wₖ |ψₖ⟩⟨ψₖ|` with weights normalized internally.
    pub fn mixture(components: &[(f64, WaveFunction)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let grid = *first.1.grid();
        let total: f64 = components.iter().map(|c| c.0).sum();
        let n = grid.n_points;
        let mut rho = vec![ZERO; n * n];
        for (w, psi) in components {
            if psi.grid() != &grid || *w < 0.0 {
                return Err(Error::InvalidParameter("mixture components must share a grid and have non-negative weights".into()));
            }
            let amp = psi.amplitudes();
            let w = w / total;
            for i in 0..n {
                for j in 0..n {
                    rho[i * n + j] += w * amp[i] * amp[j].conj();
                }
            }
        }
        let mut s = QuantumState { grid, rho };
        s.normalize();
        Ok(s)
    }

    /// Minimum-uncertainty Gaussian with the given centroid and width.
    pub fn gaussian(grid: PositionGrid, hbar: f64, x_mean: f64, p_mean: f64, sigma_x: f64) -> Result<Self> {
        Ok(Self::from_pure(&WaveFunction::gaussian(grid, hbar, x_mean, p_mean, sigma_x)?))
    }

    pub fn grid_ref(&self) -> &PositionGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn matrix_mut(&mut self) -> &mut [Complex64] {
        &mut self.rho
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.rho[i * self.grid.n_points + j]
    }

    pub fn trace(&self) -> f64 {
        let n = self.grid.n_points;
        (0..n).map(|i| self.rho[i * n + i].re).sum::<f64>() * self.grid.dx()
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.rho.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx
    }

    pub fn max_abs(&self) -> f64 {
        self.rho.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |ρ(x₁,x₂) − ρ*(x₂,x₁)|` relative to the largest element.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.n_points;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = (self.rho[i * n + j] - self.rho[j * n + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        let scale = self.max_abs();
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Replaces ρ by `(ρ + ρ†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.grid.n_points;
        for i in 0..n {
            self.rho[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                let a = self.rho[i * n + j];
                let b = self.rho[j * n + i];
                let avg = (a + b.conj()) * 0.5;
                self.rho[i * n + j] = avg;
                self.rho[j * n + i] = avg.conj();
            }
        }
    }

    /// Hermitizes and returns the relative defect that was removed.
    fn hermitize_measuring(&mut self) -> f64 {
        let n = self.grid.n_points;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let d = self.rho[i * n + i];
            worst = worst.max(4.0 * d.im * d.im);
            scale = scale.max(d.norm_sqr());
            self.rho[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                let a = self.rho[i * n + j];
                let b = self.rho[j * n + i];
                worst = worst.max((a - b.conj()).norm_sqr());
                scale = scale.max(a.norm_sqr());
                let avg = (a + b.conj()) * 0.5;
                self.rho[i * n + j] = avg;
                self.rho[j * n + i] = avg.conj();
            }
        }
        if scale > 0.0 {
            (worst / scale).sqrt()
        } else {
            0.0
        }
    }

    fn hermitian_matrix(&self) -> DMatrix<Complex64> {
        let n = self.grid.n_points;
        let dx = self.grid.dx();
        DMatrix::from_fn(n, n, |i, j| {
            let a = self.rho[i * n + j];
            let b = self.rho[j * n + i].conj();
            (a + b) * (0.5 * dx)
        })
    }

    /// Eigenvalues of the trace-one operator (the matrix weighted by `dx`).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.hermitian_matrix().symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Clips eigenvalues in `(floor, 0)` to zero and renormalizes; an
    /// eigenvalue below `floor` is reported as a positivity violation.
    /// Returns the minimum eigenvalue found.
    pub fn repair_positivity(&mut self, floor: f64) -> Result<f64> {
        let eig = self.hermitian_matrix().symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < floor {
            return Err(Error::PositivityViolated(min));
        }
        if min < 0.0 {
            let n = self.grid.n_points;
            let dx = self.grid.dx();
            let v = &eig.eigenvectors;
            let mut rho = vec![ZERO; n * n];
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam <= 0.0 {
                    continue;
                }
                for i in 0..n {
                    let vi = v[(i, k)] * (lam / dx);
                    for j in 0..n {
                        rho[i * n + j] += vi * v[(j, k)].conj();
                    }
                }
            }
            self.rho = rho;
            self.normalize_trace();
        }
        Ok(min)
    }

    fn normalize_trace(&mut self) -> f64 {
        let tr = self.trace();
        if tr > 0.0 && tr.is_finite() {
            let s = 1.0 / tr;
            for z in self.rho.iter_mut() {
                *z *= s;
            }
        }
        tr
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized wave function.
    pub fn fidelity_with_pure(&self, psi: &WaveFunction) -> f64 {
        let n = self.grid.n_points;
        let dx = self.grid.dx();
        let a = psi.amplitudes();
        let mut acc = ZERO;
        for i in 0..n {
            let mut row = ZERO;
            for j in 0..n {
                row += self.rho[i * n + j] * a[j];
            }
            acc += a[i].conj() * row;
        }
        acc.re * dx * dx
    }

    /// Largest elementwise difference.
    pub fn max_difference(&self, other: &QuantumState) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Right-multiplies every row by the kinetic propagator (or its adjoint
    /// when `conj`). The phase is even in κ, so the transform order is
    /// immaterial.
    fn rows_momentum(&mut self, spectral: &Spectral, phase: &[Complex64], conj: bool, scratch: &mut [Complex64]) {
        let n = self.grid.n_points;
        let inv_n = 1.0 / n as f64;
        // rustfft transforms every length-n chunk of the buffer in one call
        spectral.inverse.process_with_scratch(&mut self.rho, scratch);
        for row in self.rho.chunks_exact_mut(n) {
            for (z, ph) in row.iter_mut().zip(phase) {
                *z *= if conj { ph.conj() } else { *ph } * inv_n;
            }
        }
        spectral.forward.process_with_scratch(&mut self.rho, scratch);
    }

    fn transpose_in_place(&mut self) {
        const BLOCK: usize = 16;
        let n = self.grid.n_points;
        for bi in (0..n).step_by(BLOCK) {
            for bj in (bi..n).step_by(BLOCK) {
                for i in bi..(bi + BLOCK).min(n) {
                    let start = if bi == bj { i + 1 } else { bj };
                    for j in start..(bj + BLOCK).min(n) {
                        self.rho.swap(i * n + j, j * n + i);
                    }
                }
            }
        }
    }

    /// `Σ ρ(xᵢ,xⱼ)` style raw moments via one pass of row transforms.
    fn raw_moments(&self, spectral: &Spectral, hbar: f64) -> RawMoments {
        let grid = &self.grid;
        let n = grid.n_points;
        let mut scratch = spectral.scratch();
        let mut row = vec![ZERO; n];
        // transformed[i*n + k] = Σⱼ ρ(i,j) e^{+2πi jk/n}
        let mut transformed = vec![ZERO; n * n];
        for i in 0..n {
            row.copy_from_slice(&self.rho[i * n..(i + 1) * n]);
            spectral.inverse.process_with_scratch(&mut row, &mut scratch);
            transformed[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        let kappa = grid.wavenumbers();
        // momentum-space diagonal
        let mut pk = vec![0.0; n];
        for (k, out) in pk.iter_mut().enumerate() {
            let w = spectral.dft_row(k);
            let mut acc = ZERO;
            for i in 0..n {
                acc += w[i] * transformed[i * n + k];
            }
            *out = acc.re;
        }
        let norm: f64 = pk.iter().sum();
        let (mut p1, mut p2) = (0.0, 0.0);
        for (k, &w) in pk.iter().enumerate() {
            let p = hbar * kappa[k];
            p1 += p * w;
            p2 += p * p * w;
        }
        p1 /= norm;
        p2 /= norm;
        // ⟨xp⟩ from ∂ along the second index evaluated on the diagonal
        let mut xp = 0.0;
        let (mut x1, mut x2, mut tr) = (0.0, 0.0, 0.0);
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let mut d = ZERO;
            for k in 0..n {
                let kap = if 2 * k == n { 0.0 } else { kappa[k] };
                d += Complex64::new(0.0, -kap) * transformed[i * n + k] * spectral.dft_row(k)[i];
            }
            d *= inv_n;
            // (pρ)(x,x) = -iħ ∂₁ρ(x₁,x)|ₓ = -iħ conj(∂₂ρ(x,x₂))|ₓ
            let p_rho = Complex64::new(0.0, -hbar) * d.conj();
            let x = grid.x(i);
            let diag = self.rho[i * n + i].re;
            xp += x * p_rho.re;
            x1 += x * diag;
            x2 += x * x * diag;
            tr += diag;
        }
        RawMoments { x: x1 / tr, p: p1, xx: x2 / tr, xp: xp / tr, pp: p2 }
    }
}

impl GridState for QuantumState {
    fn grid(&self) -> &PositionGrid {
        &self.grid
    }

    fn position_density(&self) -> Vec<f64> {
        let n = self.grid.n_points;
        (0..n).map(|i| self.rho[i * n + i].re).collect()
    }

    fn apply_diagonal(&mut self, a: &[Complex64]) {
        let n = self.grid.n_points;
        for (i, row) in self.rho.chunks_exact_mut(n).enumerate() {
            let ai = a[i];
            for (z, aj) in row.iter_mut().zip(a) {
                *z *= ai * aj.conj();
            }
        }
    }

    fn apply_real_diagonal(&mut self, g: &[f64]) {
        let n = self.grid.n_points;
        for (i, row) in self.rho.chunks_exact_mut(n).enumerate() {
            let gi = g[i];
            for (z, gj) in row.iter_mut().zip(g) {
                *z *= gi * gj;
            }
        }
    }

    fn apply_momentum_diagonal(&mut self, spectral: &Spectral, phase: &[Complex64], ws: &mut Workspace) {
        ws.ensure_fft(spectral);
        // ρ K† on rows, then K ρ through the transpose (K is symmetric).
        self.rows_momentum(spectral, phase, true, &mut ws.fft);
        self.transpose_in_place();
        self.rows_momentum(spectral, phase, false, &mut ws.fft);
        self.transpose_in_place();
    }

    fn normalize(&mut self) -> f64 {
        self.normalize_trace()
    }

    fn finish_step(&mut self, check_positivity: bool) -> Result<StepCheck> {
        let hermiticity_defect = self.hermitize_measuring();
        let min_eigenvalue = if check_positivity {
            Some(self.repair_positivity(POSITIVITY_FLOOR)?)
        } else {
            None
        };
        self.normalize_trace();
        let trace_error = (self.trace() - 1.0).abs();
        Ok(StepCheck { trace_error, hermiticity_defect, min_eigenvalue })
    }

    fn moments(&self, spec: &SystemSpec, t: f64) -> MomentSet {
        let spectral = Spectral::shared(self.grid);
        let raw = self.raw_moments(&spectral, spec.hbar);
        let dx = self.grid.dx();
        let v_mean: f64 = self
            .position_density()
            .iter()
            .enumerate()
            .map(|(i, p)| p * spec.potential_at(self.grid.x(i), t) * dx)
            .sum::<f64>()
            / self.trace();
        moments::from_raw(raw, self.purity() / self.trace().powi(2), spec.mass, v_mean)
    }

    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64) {
        for (z, f) in self.rho.iter_mut().zip(&fiducial.rho) {
            *z = f + (*z - f) * epsilon;
        }
        self.normalize_trace();
    }

    fn displace(&mut self, shift: f64) {
        let spectral = Spectral::shared(self.grid);
        let phase: Vec<Complex64> = self
            .grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -k * shift))
            .collect();
        let mut scratch = spectral.scratch();
        let n = self.grid.n_points;
        let inv_n = 1.0 / n as f64;
        // A translation is a linear map on each index separately.
        for _ in 0..2 {
            for row in self.rho.chunks_exact_mut(n) {
                spectral.forward.process_with_scratch(row, &mut scratch);
                for (z, ph) in row.iter_mut().zip(&phase) {
                    *z *= ph * inv_n;
                }
                spectral.inverse.process_with_scratch(row, &mut scratch);
            }
            self.transpose_in_place();
        }
    }
}

/// Convenience: the minimum-uncertainty Gaussian `gaussian_state` of the
/// position representation with `ħ` taken from `spec`.
pub fn gaussian_state(grid: PositionGrid, spec: &SystemSpec, x_mean: f64, p_mean: f64, sigma_x: f64) -> Result<QuantumState> {
    QuantumState::gaussian(grid, spec.hbar, x_mean, p_mean, sigma_x)
}

/// Peak value of the Wigner function of any pure Gaussian, `1/(πħ)`.
pub fn gaussian_wigner_peak(hbar: f64) -> f64 {
    1.0 / (PI * hbar)
}

/// What [`GridState::finish_step`] observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    /// `|tr − 1|` after renormalization.
    pub trace_error: f64,
    /// Relative Hermiticity defect accumulated during the step, before it
    /// was projected away.
    pub hermiticity_defect: f64,
    pub min_eigenvalue: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PositionGrid {
        PositionGrid::centered(8.0, 128).unwrap()
    }

    #[test]
    fn gaussian_moments_match_constructor() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let s = gaussian_state(grid(), &spec, 0.0, 0.0, 1.0).unwrap();
        let m = s.moments(&spec, 0.0);
        assert!(m.x_mean.abs() < 1e-12);
        assert!(m.p_mean.abs() < 1e-12);
        assert!((m.c_xx - 1.0).abs() < 1e-9);
        assert!((m.c_pp - 0.25).abs() < 1e-9);
        assert!(m.c_xp.abs() < 1e-12);
        assert!((m.purity - 1.0).abs() < 1e-12);
        assert!((m.energy - 0.625).abs() < 1e-9);
    }

    #[test]
    fn translated_gaussian() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let s = gaussian_state(grid(), &spec, 2.0, -1.0, 0.5).unwrap();
        let m = s.moments(&spec, 0.0);
        assert!((m.x_mean - 2.0).abs() < 1e-6);
        assert!((m.p_mean + 1.0).abs() < 1e-6);
    }

    #[test]
    fn momentum_spread_scales_with_hbar() {
        let spec = SystemSpec::harmonic(1.0, 2.0, 1.0).unwrap();
        let s = gaussian_state(grid(), &spec, 0.0, 0.0, 1.0).unwrap();
        assert!((s.moments(&spec, 0.0).c_pp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constructor_rejects_coarse_or_escaping() {
        let g = grid();
        assert!(matches!(QuantumState::gaussian(g, 1.0, 0.0, 0.0, 0.2), Err(Error::GridTooCoarse(_))));
        assert!(matches!(QuantumState::gaussian(g, 1.0, 6.0, 0.0, 1.0), Err(Error::SupportEscape(_))));
        assert!(matches!(QuantumState::gaussian(g, 1.0, 5.5, 0.0, 0.5), Err(Error::SupportEscape(_))));
    }

    #[test]
    fn pure_state_hygiene() {
        let s = QuantumState::gaussian(grid(), 1.0, 0.5, 0.3, 0.8).unwrap();
        assert!((s.trace() - 1.0).abs() < 1e-12);
        assert!(s.hermiticity_defect() < 1e-15);
        let eig = s.eigenvalues();
        assert!(eig[0] > -1e-10);
        assert!((eig[eig.len() - 1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn displacement_moves_the_mean() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let mut s = QuantumState::gaussian(grid(), 1.0, 0.0, 0.5, 0.8).unwrap();
        s.displace(0.3);
        let m = s.moments(&spec, 0.0);
        assert!((m.x_mean - 0.3).abs() < 1e-10);
        assert!((m.p_mean - 0.5).abs() < 1e-10);
        assert!((m.c_xx - 0.64).abs() < 1e-9);
    }

    #[test]
    fn mixture_moments_add_variances() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let g = grid();
        let a = WaveFunction::gaussian(g, 1.0, 1.0, 0.0, 0.7).unwrap();
        let b = WaveFunction::gaussian(g, 1.0, -1.0, 0.0, 0.7).unwrap();
        let s = QuantumState::mixture(&[(0.5, a), (0.5, b)]).unwrap();
        let m = s.moments(&spec, 0.0);
        assert!(m.x_mean.abs() < 1e-12);
        assert!((m.c_xx - (0.49 + 1.0)).abs() < 1e-9);
        assert!(m.purity < 0.6);
    }
}
