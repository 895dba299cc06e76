//! Regime diagnostics for the emergence of Newtonian trajectories under
//! continuous measurement.
//!
//! Every margin is a ratio `LHS/RHS` of a scaling inequality `LHS ≫ RHS`;
//! "≫" is read as `ratio > threshold` with a default threshold of 10.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::percentile;
use crate::system::SystemSpec;

pub const DEFAULT_THRESHOLD: f64 = 10.0;

/// `8k / √((∂ₓ²F)²|∂ₓF| / (2mF²))` at `x̄`; `None` where `F(x̄) = 0`.
pub fn localization_margin(spec: &SystemSpec, x_mean: f64, k: f64, t: f64) -> Option<f64> {
    let f = spec.force(x_mean, t);
    if f == 0.0 {
        return None;
    }
    let (f1, f2, _) = spec.force_derivatives(x_mean);
    let rhs = (f2 * f2 * f1.abs() / (2.0 * spec.mass * f * f)).sqrt();
    Some(if rhs == 0.0 { f64::INFINITY } else { 8.0 * k / rhs })
}

/// Strongly nonlinear quantum variant `8k / ((∂ₓ²F)²ħ / (4mF²))`.
pub fn quantum_localization_margin(spec: &SystemSpec, x_mean: f64, k: f64, t: f64) -> Option<f64> {
    let f = spec.force(x_mean, t);
    if f == 0.0 {
        return None;
    }
    let (_, f2, _) = spec.force_derivatives(x_mean);
    let rhs = f2 * f2 * spec.hbar / (4.0 * spec.mass * f * f);
    Some(if rhs == 0.0 { f64::INFINITY } else { 8.0 * k / rhs })
}

/// Classical low-noise ratio `k·S / (2|∂ₓF|)`.
pub fn lownoise_margin_classical(spec: &SystemSpec, x_mean: f64, k: f64, action: f64) -> Result<f64> {
    if !(action > 0.0) {
        return Err(Error::InvalidParameter(format!("action scale must be positive, got {action}")));
    }
    let f1 = spec.force_derivatives(x_mean).0.abs();
    Ok(if f1 == 0.0 { f64::INFINITY } else { k * action / (2.0 * f1) })
}

/// Ratios for the two sides of `2|∂ₓF|/s ≪ ħk ≪ |∂ₓF|·s/4`:
/// `left = ħk·s/(2|∂ₓF|)`, `right = |∂ₓF|·s/(4ħk)`.
pub fn quantum_window(spec: &SystemSpec, x_mean: f64, k: f64, s: f64, hbar: f64) -> Result<(f64, f64)> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("dimensionless action must be positive, got {s}")));
    }
    let f1 = spec.force_derivatives(x_mean).0.abs();
    if f1 == 0.0 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    Ok((hbar * k * s / (2.0 * f1), f1 * s / (4.0 * hbar * k)))
}

/// Strength at which both window ratios are equal for slope `|∂ₓF|`:
/// `k = |∂ₓF| / (√2 ħ)`, where each ratio equals `s/(2√2)`.
pub fn balanced_strength(force_slope: f64, hbar: f64) -> f64 {
    force_slope.abs() / (std::f64::consts::SQRT_2 * hbar)
}

/// Phase-space area `∮p dx` averaged over the complete loops of an orbit.
/// A loop runs between successive upward zero crossings of `p`.
pub fn action_scale(orbit: &[(f64, f64)]) -> Result<f64> {
    let crossings: Vec<usize> = orbit
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].1 < 0.0 && w[1].1 >= 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    if crossings.len() < 2 {
        return Err(Error::NonRecurrent);
    }
    let loops: Vec<f64> = crossings
        .windows(2)
        .map(|c| shoelace(&orbit[c[0]..=c[1]]))
        .collect();
    Ok(loops.iter().sum::<f64>() / loops.len() as f64)
}

/// `|½ Σ (xᵢ pᵢ₊₁ − xᵢ₊₁ pᵢ)|` over a closed polygon.
fn shoelace(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, p0) = points[i];
        let (x1, p1) = points[(i + 1) % n];
        acc += x0 * p1 - x1 * p0;
    }
    0.5 * acc.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl Percentiles {
    pub fn of(xs: &[f64]) -> Self {
        Percentiles { p10: percentile(xs, 10.0), p50: percentile(xs, 50.0), p90: percentile(xs, 90.0) }
    }
}

/// Margins at one point of the reference orbit. Singular localization
/// samples (`F = 0`) are stored as NaN and skipped by the percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSample {
    pub t: f64,
    pub x: f64,
    pub localization: f64,
    pub lownoise: f64,
    pub window_left: f64,
    pub window_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub strength: f64,
    pub threshold: f64,
    /// Action scale `S` and `s = S/ħ`.
    pub action_scale: f64,
    pub s: f64,
    pub samples: Vec<RegimeSample>,
    pub singular_samples: usize,
    pub localization: Percentiles,
    pub lownoise: Percentiles,
    pub window_left: Percentiles,
    pub window_right: Percentiles,
}

impl RegimeReport {
    /// Evaluates every margin along `orbit` (sampled at `times`). The
    /// action scale defaults to that of the orbit itself.
    pub fn along_orbit(
        spec: &SystemSpec,
        k: f64,
        times: &[f64],
        orbit: &[(f64, f64)],
        action_override: Option<f64>,
        threshold: f64,
    ) -> Result<Self> {
        if times.len() != orbit.len() {
            return Err(Error::LengthMismatch { expected: orbit.len(), got: times.len() });
        }
        let action = match action_override {
            Some(a) => a,
            None => action_scale(orbit)?,
        };
        let s = action / spec.hbar;
        let mut samples = Vec::with_capacity(orbit.len());
        let mut singular = 0;
        for (&t, &(x, _)) in times.iter().zip(orbit) {
            let localization = localization_margin(spec, x, k, t).unwrap_or_else(|| {
                singular += 1;
                f64::NAN
            });
            let (window_left, window_right) = quantum_window(spec, x, k, s, spec.hbar)?;
            samples.push(RegimeSample {
                t,
                x,
                localization,
                lownoise: lownoise_margin_classical(spec, x, k, action)?,
                window_left,
                window_right,
            });
        }
        let column = |f: fn(&RegimeSample) -> f64| Percentiles::of(&samples.iter().map(f).collect::<Vec<_>>());
        Ok(RegimeReport {
            strength: k,
            threshold,
            action_scale: action,
            s,
            singular_samples: singular,
            localization: column(|r| r.localization),
            lownoise: column(|r| r.lownoise),
            window_left: column(|r| r.window_left),
            window_right: column(|r| r.window_right),
            samples,
        })
    }

    /// Both window ratios exceed the threshold at the 10th percentile.
    pub fn window_open(&self) -> bool {
        self.window_left.p10 > self.threshold && self.window_right.p10 > self.threshold
    }

    pub fn localized(&self) -> bool {
        self.localization.p10 > self.threshold
    }
}

/// Strength that maximizes the smaller of the two 10th-percentile window
/// ratios along an orbit, from the percentiles of `|∂ₓF|`.
pub fn window_center_strength(spec: &SystemSpec, orbit: &[(f64, f64)]) -> f64 {
    let slopes: Vec<f64> = orbit.iter().map(|&(x, _)| spec.force_derivatives(x).0.abs()).collect();
    // left p10 uses the large-slope tail, right p10 the small-slope tail
    let lo = percentile(&slopes, 10.0);
    let hi = percentile(&slopes, 90.0);
    (lo * hi / 2.0).sqrt() / spec.hbar
}
