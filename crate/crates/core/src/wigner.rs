//! Wigner phase-space view of a density matrix and its Moyal evolution.
//!
//! The transform reads `ρ(x + y/2, x − y/2)` on a half-spacing grid
//! obtained by exact band-limited interpolation of ρ, so the momentum grid
//! keeps the spacing `2πħ/(n·dx)` and spans the same Nyquist range as the
//! position representation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PositionGrid;
use crate::moments::RawMoments;
use crate::state::QuantumState;
use crate::system::SystemSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real phase-space quasi-distribution sampled on `x × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub grid: PositionGrid,
    pub hbar: f64,
    /// Ascending momenta `p_k = (k − n/2)·dp`.
    pub p_grid: Vec<f64>,
    /// `values[i*n + k] = f_W(x_i, p_k)`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn n(&self) -> usize {
        self.grid.n_points
    }

    pub fn dp(&self) -> f64 {
        self.grid.dp(self.hbar)
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n() + k]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx() * self.dp()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Phase-space averages of `x, p, x², xp, p²`.
    pub fn raw_moments(&self) -> RawMoments {
        let n = self.n();
        let cell = self.grid.dx() * self.dp();
        let mut m = RawMoments { x: 0.0, p: 0.0, xx: 0.0, xp: 0.0, pp: 0.0 };
        for i in 0..n {
            let x = self.grid.x(i);
            for (k, &p) in self.p_grid.iter().enumerate() {
                let w = self.values[i * n + k] * cell;
                m.x += x * w;
                m.p += p * w;
                m.xx += x * x * w;
                m.xp += x * p * w;
                m.pp += p * p * w;
            }
        }
        m
    }

    /// `max |f − g|` over the common grid.
    pub fn max_difference(&self, other: &WignerGrid) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch { expected: self.values.len(), got: other.values.len() });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn plan_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn transpose(a: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            a.swap(i * n + j, j * n + i);
        }
    }
}

/// Band-limited interpolation of every length-`n` row onto `2n` points,
/// splitting the Nyquist coefficient evenly between ±n/2.
fn upsample_rows(src: &[Complex64], n: usize) -> Vec<Complex64> {
    let (fwd, _) = plan_pair(n);
    let (_, inv2) = plan_pair(2 * n);
    let mut spec = src.to_vec();
    fwd.process(&mut spec);
    let m = 2 * n;
    let half = n / 2;
    let mut out = vec![ZERO; (src.len() / n) * m];
    let scale = 1.0 / n as f64;
    for (row_in, row_out) in spec.chunks_exact(n).zip(out.chunks_exact_mut(m)) {
        row_out[..half].copy_from_slice(&row_in[..half]);
        row_out[half] = row_in[half] * 0.5;
        row_out[m - half] = row_in[half] * 0.5;
        row_out[m - half + 1..].copy_from_slice(&row_in[half + 1..]);
    }
    inv2.process(&mut out);
    for z in &mut out {
        *z *= scale;
    }
    out
}

/// ρ on the `2n × 2n` half-spacing grid.
fn fine_matrix(state: &QuantumState) -> Vec<Complex64> {
    let n = state.grid_ref().n_points;
    let m = 2 * n;
    // rows: n × 2n; then columns through a transpose
    let rows = upsample_rows(state.matrix(), n);
    let mut cols = vec![ZERO; m * n];
    for i in 0..n {
        for j in 0..m {
            cols[j * n + i] = rows[i * m + j];
        }
    }
    let fine_t = upsample_rows(&cols, n);
    let mut fine = fine_t;
    transpose(&mut fine, m);
    fine
}

/// `f_W(x,p) = (1/2πħ)∫dy e^{−ipy/ħ} ρ(x + y/2, x − y/2)`.
pub fn wigner_transform(state: &QuantumState, hbar: f64) -> Result<WignerGrid> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidParameter("the Wigner transform needs hbar > 0".into()));
    }
    let grid = *state.grid_ref();
    let n = grid.n_points;
    let m = 2 * n;
    let half = n / 2;
    let fine = fine_matrix(state);
    let (fwd, _) = plan_pair(n);
    let scale = grid.dx() / (2.0 * PI * hbar);
    let mut values = vec![0.0; n * n];
    let mut g = vec![ZERO; n];
    for i in 0..n {
        // g[j mod n] = Σ ρ_fine(2i + j, 2i − j) over every j with both
        // points inside the box (|y| < L). Sampling f_W only at multiples of
        // dp folds the y-sum onto n bins.
        g.iter_mut().for_each(|z| *z = ZERO);
        for j in -(n as isize)..(n as isize) {
            let a = 2 * i as isize + j;
            let b = 2 * i as isize - j;
            if (0..m as isize).contains(&a) && (0..m as isize).contains(&b) {
                g[j.rem_euclid(n as isize) as usize] += fine[a as usize * m + b as usize];
            }
        }
        fwd.process(&mut g);
        // bin q holds momentum q·dp (signed); store ascending
        for k in 0..n {
            let q = (k + half) % n;
            values[i * n + k] = g[q].re * scale;
        }
    }
    let dp = grid.dp(hbar);
    let p_grid = (0..n).map(|k| (k as f64 - half as f64) * dp).collect();
    Ok(WignerGrid { grid, hbar, p_grid, values })
}

/// Spectral derivative engine for the Moyal right-hand side.
pub struct MoyalOperator {
    spec: SystemSpec,
    grid: PositionGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kx: Vec<f64>,
    kp: Vec<f64>,
    buf: Vec<Complex64>,
}

impl MoyalOperator {
    pub fn new(spec: SystemSpec, grid: PositionGrid) -> Result<Self> {
        spec.validate()?;
        if !spec.is_quantum() {
            return Err(Error::InvalidParameter("Moyal evolution needs hbar > 0".into()));
        }
        let n = grid.n_points;
        let (fwd, inv) = plan_pair(n);
        let p_length = n as f64 * grid.dp(spec.hbar);
        let kp = (0..n)
            .map(|k| {
                let s = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                2.0 * PI * s / p_length
            })
            .collect();
        Ok(MoyalOperator { spec, grid, fwd, inv, kx: grid.wavenumbers(), kp, buf: vec![ZERO; n * n] })
    }

    /// Spectral `∂^order` along each contiguous row of `buf`. The Nyquist
    /// mode is dropped for odd orders.
    fn row_derivative(&mut self, order: u32, along_p: bool) {
        let n = self.grid.n_points;
        self.fwd.process(&mut self.buf);
        let ks = if along_p { &self.kp } else { &self.kx };
        let factor: Vec<Complex64> = ks
            .iter()
            .enumerate()
            .map(|(q, &k)| {
                if order % 2 == 1 && q == n / 2 {
                    ZERO
                } else {
                    Complex64::new(0.0, k).powu(order) / n as f64
                }
            })
            .collect();
        for row in self.buf.chunks_exact_mut(n) {
            for (z, f) in row.iter_mut().zip(&factor) {
                *z *= f;
            }
        }
        self.inv.process(&mut self.buf);
    }

    fn derivative(&mut self, f: &[f64], order: u32, along_p: bool) -> Vec<f64> {
        let n = self.grid.n_points;
        for (z, &v) in self.buf.iter_mut().zip(f) {
            *z = Complex64::new(v, 0.0);
        }
        if !along_p {
            transpose(&mut self.buf, n);
        }
        self.row_derivative(order, along_p);
        if !along_p {
            transpose(&mut self.buf, n);
        }
        self.buf.iter().map(|z| z.re).collect()
    }

    /// `∂ₜf = −(p/m)∂ₓf + ∂ₓV ∂ₚf − (ħ²/24)∂ₓ³V ∂ₚ³f`.
    pub fn rhs(&mut self, w: &WignerGrid, t: f64) -> Vec<f64> {
        let classical = self.advection(w, t);
        let correction = self.correction(w);
        classical.iter().zip(&correction).map(|(a, b)| a + b).collect()
    }

    /// Classical Liouville part `−(p/m)∂ₓf − F ∂ₚf`.
    pub fn advection(&mut self, w: &WignerGrid, t: f64) -> Vec<f64> {
        let n = self.grid.n_points;
        let fx = self.derivative(&w.values, 1, false);
        let fp = self.derivative(&w.values, 1, true);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let force = self.spec.force(self.grid.x(i), t);
            for (k, &p) in w.p_grid.iter().enumerate() {
                let idx = i * n + k;
                out[idx] = -(p / self.spec.mass) * fx[idx] - force * fp[idx];
            }
        }
        out
    }

    /// The single surviving quantum correction `−(ħ²/24)∂ₓ³V ∂ₚ³f`.
    pub fn correction(&mut self, w: &WignerGrid) -> Vec<f64> {
        let n = self.grid.n_points;
        let fppp = self.derivative(&w.values, 3, true);
        let h2 = self.spec.hbar * self.spec.hbar;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let v3 = self.spec.third_derivative(self.grid.x(i));
            for k in 0..n {
                out[i * n + k] = -(h2 / 24.0) * v3 * fppp[i * n + k];
            }
        }
        out
    }

    /// Classical RK4 step of the Moyal equation.
    pub fn rk4_step(&mut self, w: &mut WignerGrid, dt: f64, t: f64) {
        let mut stage = w.clone();
        let k1 = self.rhs(w, t);
        axpy(&mut stage.values, &w.values, &k1, 0.5 * dt);
        let k2 = self.rhs(&stage, t + 0.5 * dt);
        axpy(&mut stage.values, &w.values, &k2, 0.5 * dt);
        let k3 = self.rhs(&stage, t + 0.5 * dt);
        axpy(&mut stage.values, &w.values, &k3, dt);
        let k4 = self.rhs(&stage, t + dt);
        for (i, v) in w.values.iter_mut().enumerate() {
            *v += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

impl std::fmt::Debug for MoyalOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MoyalOperator").field("spec", &self.spec).field("grid", &self.grid).finish()
    }
}

fn axpy(out: &mut [f64], base: &[f64], slope: &[f64], h: f64) {
    for ((o, b), s) in out.iter_mut().zip(base).zip(slope) {
        *o = b + h * s;
    }
}

/// Time derivative of `w` under the Moyal equation at time `t`.
pub fn moyal_rhs(w: &WignerGrid, spec: &SystemSpec, t: f64) -> Result<Vec<f64>> {
    Ok(MoyalOperator::new(*spec, w.grid)?.rhs(w, t))
}

/// Integrates the Moyal equation from `t0` for `n_steps` RK4 steps.
pub fn evolve_wigner(w: &WignerGrid, spec: &SystemSpec, dt: f64, t0: f64, n_steps: usize) -> Result<WignerGrid> {
    let mut op = MoyalOperator::new(*spec, w.grid)?;
    let mut out = w.clone();
    for s in 0..n_steps {
        op.rk4_step(&mut out, dt, t0 + s as f64 * dt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::GridState;
    use crate::wavefn::WaveFunction;

    fn grid() -> PositionGrid {
        PositionGrid::centered(8.0, 64).unwrap()
    }

    #[test]
    fn gaussian_wigner_is_positive_and_normalized() {
        let s = QuantumState::gaussian(grid(), 1.0, 0.0, 0.0, 1.0).unwrap();
        let w = wigner_transform(&s, 1.0).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-6);
        assert!(w.min_value() > -1e-8, "min {}", w.min_value());
        // minimum-uncertainty Gaussian peaks at 1/(πħ)
        assert!((w.max_value() - 1.0 / PI).abs() < 1e-6);
    }

    /// Direct quadrature of the defining integral on a pure state, with
    /// ψ evaluated analytically off-grid.
    #[test]
    fn cat_state_has_negative_fringes() {
        let g = PositionGrid::centered(10.0, 128).unwrap();
        let a = WaveFunction::gaussian(g, 1.0, -2.5, 0.0, 0.7).unwrap();
        let b = WaveFunction::gaussian(g, 1.0, 2.5, 0.0, 0.7).unwrap();
        let psi: Vec<Complex64> = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + y).collect();
        let cat = QuantumState::from_pure(&WaveFunction::from_amplitudes(g, psi).unwrap());
        let w = wigner_transform(&cat, 1.0).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-6);
        assert!(w.min_value() < -0.1, "min {}", w.min_value());

        // brute-force integral at x = 0 for the analytic cat
        let sigma: f64 = 0.7;
        let phi = |x: f64| (-(x * x) / (4.0 * sigma * sigma)).exp();
        let cat_amp = |x: f64| phi(x + 2.5) + phi(x - 2.5);
        let norm: f64 = (0..20000).map(|i| cat_amp(-15.0 + i as f64 * 1.5e-3).powi(2) * 1.5e-3).sum();
        let i0 = g.n_points / 2;
        for k in [60, 64, 66] {
            let p = w.p_grid[k];
            let dy = 1e-3;
            let mut acc = 0.0;
            for j in -15000..=15000 {
                let y = j as f64 * dy;
                acc += (p * y).cos() * cat_amp(y / 2.0) * cat_amp(-y / 2.0) * dy;
            }
            let brute = acc / (2.0 * PI * norm);
            assert!((w.value(i0, k) - brute).abs() < 1e-6, "p={p}: {} vs {brute}", w.value(i0, k));
        }
    }

    #[test]
    fn wigner_moments_match_density_matrix() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let g = grid();
        let a = WaveFunction::gaussian(g, 1.0, 0.8, -0.5, 0.6).unwrap();
        let b = WaveFunction::gaussian(g, 1.0, -1.0, 0.7, 0.9).unwrap();
        let s = QuantumState::mixture(&[(0.3, a), (0.7, b)]).unwrap();
        let from_rho = s.moments(&spec, 0.0).raw().as_array();
        let from_w = wigner_transform(&s, 1.0).unwrap().raw_moments().as_array();
        for (a, b) in from_rho.iter().zip(&from_w) {
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn harmonic_correction_vanishes() {
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let s = QuantumState::gaussian(grid(), 1.0, 1.0, 0.0, 0.8).unwrap();
        let w = wigner_transform(&s, 1.0).unwrap();
        let mut op = MoyalOperator::new(spec, w.grid).unwrap();
        assert!(op.correction(&w).iter().all(|&c| c == 0.0));
        let full = op.rhs(&w, 0.0);
        let adv = op.advection(&w, 0.0);
        assert_eq!(full, adv);
    }

    #[test]
    fn quartic_correction_is_cubic_momentum_derivative() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
        let s = QuantumState::gaussian(grid(), 1.0, 0.5, 0.0, 0.6).unwrap();
        let w = wigner_transform(&s, 1.0).unwrap();
        let mut op = MoyalOperator::new(spec, w.grid).unwrap();
        let corr = op.correction(&w);
        // analytic check: f = e^{−(x−x̄)²/2σ²} e^{−a p²}/π with a = 2σ²/ħ²,
        // so ∂ₚ³f = (12a²p − 8a³p³) f
        let n = w.n();
        let a: f64 = 2.0 * 0.6 * 0.6;
        for i in [20, 36, 44] {
            let x = w.grid.x(i);
            for k in 0..n {
                let p = w.p_grid[k];
                let f = (-(x - 0.5).powi(2) / (2.0 * 0.36) - a * p * p).exp() / PI;
                let expect = -(1.0 / 24.0) * 6.0 * x * (12.0 * a * a * p - 8.0 * a.powi(3) * p.powi(3)) * f;
                assert!((corr[i * n + k] - expect).abs() < 1e-7, "x={x} p={p}: {} vs {expect}", corr[i * n + k]);
            }
        }
    }
}
