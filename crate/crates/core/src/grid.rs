//! Uniform periodic position grid and the FFT machinery attached to it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 16;

/// Fraction of the grid, on each side, treated as the hard-wall guard band.
pub const GUARD_FRACTION: f64 = 0.1;

/// Probability allowed inside the guard band before a state is rejected.
pub const ESCAPE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl PositionGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "grid needs a power of two ≥ {MIN_POINTS} points, got {n_points}"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds [{x_min}, {x_max}] are empty"
            )));
        }
        Ok(PositionGrid { x_min, x_max, n_points })
    }

    /// Symmetric grid `[-half_width, half_width)`.
    pub fn centered(half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumber of FFT bin `k` (standard FFT ordering, signed).
    pub fn wavenumber(&self, k: usize) -> f64 {
        let n = self.n_points as isize;
        let k = k as isize;
        let signed = if k < n / 2 { k } else { k - n };
        2.0 * PI * signed as f64 / self.length()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.wavenumber(k)).collect()
    }

    /// Largest representable momentum `πħ/dx`.
    pub fn momentum_nyquist(&self, hbar: f64) -> f64 {
        PI * hbar / self.dx()
    }

    /// Momentum spacing `2πħ/(n dx)`.
    pub fn dp(&self, hbar: f64) -> f64 {
        2.0 * PI * hbar / self.length()
    }

    /// Number of points in each guard band.
    pub fn guard_points(&self) -> usize {
        ((self.n_points as f64 * GUARD_FRACTION).ceil() as usize).max(1)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }
}

/// FFT plans plus the DFT phase table used to read momentum-space diagonals.
pub struct Spectral {
    pub grid: PositionGrid,
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    /// `table[k*n + i] = exp(-2πi·ik/n)`.
    dft_table: Vec<Complex64>,
}

impl Spectral {
    pub fn new(grid: PositionGrid) -> Self {
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut dft_table = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            for i in 0..n {
                let phase = -2.0 * PI * ((i * k) % n) as f64 / n as f64;
                dft_table[k * n + i] = Complex64::from_polar(1.0, phase);
            }
        }
        Spectral { grid, forward, inverse, scratch_len, dft_table }
    }

    /// Process-wide cached instance for `grid`.
    pub fn shared(grid: PositionGrid) -> Arc<Spectral> {
        type Cache = Mutex<HashMap<(u64, u64, usize), Arc<Spectral>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = (grid.x_min.to_bits(), grid.x_max.to_bits(), grid.n_points);
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(key)
            .or_insert_with(|| Arc::new(Spectral::new(grid)))
            .clone()
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    pub fn dft_row(&self, k: usize) -> &[Complex64] {
        let n = self.grid.n_points;
        &self.dft_table[k * n..(k + 1) * n]
    }
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(PositionGrid::new(-1.0, 1.0, 8).is_err());
        assert!(PositionGrid::new(-1.0, 1.0, 100).is_err());
        assert!(PositionGrid::new(1.0, -1.0, 64).is_err());
        let g = PositionGrid::centered(8.0, 128).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.x(0), -8.0);
        assert_eq!(g.guard_points(), 13);
    }

    #[test]
    fn wavenumbers_are_signed() {
        let g = PositionGrid::centered(8.0, 16).unwrap();
        let dk = 2.0 * PI / 16.0;
        assert_eq!(g.wavenumber(1), dk);
        assert_eq!(g.wavenumber(15), -dk);
        assert_eq!(g.wavenumber(8), -8.0 * dk);
    }
}
