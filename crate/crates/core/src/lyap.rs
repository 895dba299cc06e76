//! Finite-time Lyapunov exponents of conditioned trajectories.
//!
//! A fiducial and a perturbed trajectory (initial centroids `Δ₀` apart)
//! consume the same Wiener increments; their divergence
//! `Δ(t) = |⟨x⟩ − ⟨x⟩_fid|` gives `λ(t) = ln(Δ(t)/Δ₀)/t`. An optional
//! renormalization mode pulls the perturbed state back toward the fiducial
//! whenever `Δ` exceeds a threshold and carries the removed stretch forward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::WienerStream;
use crate::qdyn::Propagator;
use crate::state::GridState;
use crate::stats::{self, linear_fit};
use crate::system::SystemSpec;

/// Separations below this fraction of `Δ₀` count as merged trajectories.
pub const MERGE_FRACTION: f64 = 1e-14;

/// One member of a fiducial/perturbed pair.
pub trait Trajectory: Clone + Send {
    fn step(&mut self, dt: f64, t: f64, dw: f64) -> Result<()>;
    fn position(&self) -> f64;
    /// Shifts the initial condition by `shift` in position.
    fn displace(&mut self, shift: f64);
    /// Moves the state a fraction `1 − ε` of the way to `fiducial`.
    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64);
}

/// Quantum state with its own stepper; steps are conditioned when the
/// propagator's measurement strength is positive and isolated otherwise.
#[derive(Debug, Clone)]
pub struct QuantumTrajectory<S: GridState> {
    pub prop: Propagator,
    pub state: S,
}

impl<S: GridState> Trajectory for QuantumTrajectory<S> {
    fn step(&mut self, dt: f64, t: f64, dw: f64) -> Result<()> {
        self.prop.advance(&mut self.state, dt, t, dw).map(|_| ())
    }

    fn position(&self) -> f64 {
        self.state.mean_position()
    }

    fn displace(&mut self, shift: f64) {
        self.state.displace(shift);
    }

    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64) {
        self.state.pull_toward(&fiducial.state, epsilon);
    }
}

/// A single Newtonian phase-space point (the noise is ignored).
#[derive(Debug, Clone, Copy)]
pub struct NewtonPoint {
    pub spec: SystemSpec,
    pub x: f64,
    pub p: f64,
}

impl Trajectory for NewtonPoint {
    fn step(&mut self, dt: f64, t: f64, _dw: f64) -> Result<()> {
        crate::cdyn::leapfrog(&mut self.x, &mut self.p, &self.spec, dt, t);
        Ok(())
    }

    fn position(&self) -> f64 {
        self.x
    }

    fn displace(&mut self, shift: f64) {
        self.x += shift;
    }

    fn pull_toward(&mut self, fiducial: &Self, epsilon: f64) {
        self.x = fiducial.x + epsilon * (self.x - fiducial.x);
        self.p = fiducial.p + epsilon * (self.p - fiducial.p);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Initial centroid offset `Δ₀`.
    pub initial_separation: f64,
    pub n_realizations: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Record `Δ` and `λ` every this many steps.
    pub sample_every: usize,
    /// Pull the perturbed state back to `Δ₀` whenever `Δ` exceeds this.
    pub renormalize_above: Option<f64>,
    pub master_seed: u64,
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_separation > 0.0) {
            return Err(Error::InvalidParameter("initial separation must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > self.dt) {
            return Err(Error::InvalidParameter("need 0 < dt < horizon".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        if let Some(th) = self.renormalize_above {
            if !(th > self.initial_separation) {
                return Err(Error::InvalidParameter("renormalization threshold must exceed Δ₀".into()));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// `Δ(t)` and `λ(t)` of one fiducial/perturbed pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    pub times: Vec<f64>,
    /// Current separation (after any renormalization at that sample).
    pub delta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub merged: bool,
    pub renormalizations: usize,
}

/// Runs `fiducial` and a copy displaced by `Δ₀` on one shared noise
/// stream.
pub fn paired_run<T: Trajectory>(fiducial: T, cfg: &LyapunovConfig, stream_index: u64) -> Result<PairedSeries> {
    let mut perturbed = fiducial.clone();
    perturbed.displace(cfg.initial_separation);
    paired_run_from(fiducial, perturbed, cfg, stream_index)
}

/// As [`paired_run`] with an explicit perturbed partner.
pub fn paired_run_from<T: Trajectory>(
    mut fiducial: T,
    mut perturbed: T,
    cfg: &LyapunovConfig,
    stream_index: u64,
) -> Result<PairedSeries> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let mut noise = WienerStream::new(cfg.master_seed, stream_index, cfg.dt)?;
    let d0 = cfg.initial_separation;
    let capacity = n_steps / cfg.sample_every;
    let mut out = PairedSeries {
        times: Vec::with_capacity(capacity),
        delta: Vec::with_capacity(capacity),
        lambda: Vec::with_capacity(capacity),
        merged: false,
        renormalizations: 0,
    };
    // accumulated ln-stretch removed by renormalizations
    let mut removed = 0.0;
    for s in 0..n_steps {
        let t = s as f64 * cfg.dt;
        let dw = noise.next_increment();
        fiducial.step(cfg.dt, t, dw)?;
        perturbed.step(cfg.dt, t, dw)?;
        let mut delta = (perturbed.position() - fiducial.position()).abs();
        let t1 = (s + 1) as f64 * cfg.dt;
        if delta < MERGE_FRACTION * d0 {
            out.merged = true;
        }
        let sample = (s + 1) % cfg.sample_every == 0;
        if sample {
            out.times.push(t1);
            out.lambda.push((removed + (delta / d0).ln()) / t1);
        }
        if let Some(th) = cfg.renormalize_above {
            if delta > th {
                perturbed.pull_toward(&fiducial, d0 / delta);
                let after = (perturbed.position() - fiducial.position()).abs();
                removed += (delta / after).ln();
                delta = after;
                out.renormalizations += 1;
            }
        }
        if sample {
            out.delta.push(delta);
        }
    }
    Ok(out)
}

/// Per-realization series with the ensemble mean and standard deviation of
/// `λ(t)` over the realizations that did not merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub realizations: Vec<PairedSeries>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Indices of merged realizations, left out of `mean` and `sd`.
    pub excluded: Vec<usize>,
}

impl LyapunovSeries {
    /// Assembles ensemble statistics from realizations that share sample
    /// times.
    pub fn from_realizations(realizations: Vec<PairedSeries>) -> Result<Self> {
        let first = realizations.first().ok_or(Error::EmptyEnsemble)?;
        let times = first.times.clone();
        if let Some(r) = realizations.iter().find(|r| r.times.len() != times.len()) {
            return Err(Error::LengthMismatch { expected: times.len(), got: r.times.len() });
        }
        let excluded: Vec<usize> = realizations
            .iter()
            .enumerate()
            .filter(|(_, r)| r.merged)
            .map(|(i, _)| i)
            .collect();
        let kept: Vec<&PairedSeries> = realizations.iter().filter(|r| !r.merged).collect();
        let mut mean = Vec::with_capacity(times.len());
        let mut sd = Vec::with_capacity(times.len());
        let mut column = Vec::with_capacity(kept.len());
        for i in 0..times.len() {
            column.clear();
            column.extend(kept.iter().map(|r| r.lambda[i]));
            mean.push(stats::mean(&column));
            sd.push(stats::std_dev(&column));
        }
        Ok(LyapunovSeries { times, realizations, mean, sd, excluded })
    }

    /// Time-average of each kept realization's `λ(t)` over `[t_lo, t_hi]`,
    /// returned with the mean and standard error across realizations.
    pub fn plateau(&self, t_lo: f64, t_hi: f64) -> Result<Plateau> {
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= t_lo && self.times[i] <= t_hi)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidParameter(format!("no samples in [{t_lo}, {t_hi}]")));
        }
        let per_realization: Vec<f64> = self
            .realizations
            .iter()
            .filter(|r| !r.merged)
            .map(|r| idx.iter().map(|&i| r.lambda[i]).sum::<f64>() / idx.len() as f64)
            .collect();
        if per_realization.len() < 2 {
            return Err(Error::EmptyEnsemble);
        }
        Ok(Plateau {
            mean: stats::mean(&per_realization),
            std_error: stats::std_error(&per_realization),
            per_realization,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub mean: f64,
    pub std_error: f64,
    pub per_realization: Vec<f64>,
}

/// Runs `n_realizations` pairs, realization `i` on noise stream `i`.
/// Results are collected into pre-indexed slots, so the output does not
/// depend on how the work is scheduled.
pub fn ensemble_lyapunov<T, F>(make: F, cfg: &LyapunovConfig) -> Result<LyapunovSeries>
where
    T: Trajectory,
    F: Fn(usize) -> Result<T> + Sync,
{
    cfg.validate()?;
    if cfg.n_realizations < 2 {
        return Err(Error::InvalidParameter("need at least two realizations".into()));
    }
    let run = |i: usize| -> Result<PairedSeries> { paired_run(make(i)?, cfg, i as u64) };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<PairedSeries>> = {
        use rayon::prelude::*;
        (0..cfg.n_realizations).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<PairedSeries>> = (0..cfg.n_realizations).map(run).collect();
    LyapunovSeries::from_realizations(results.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Log-log fit of `|λ(t)|` against `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Window actually used after clipping to the data.
    pub window: (f64, f64),
    pub shrunk: bool,
    /// Samples dropped because `λ` was zero or not finite.
    pub dropped: usize,
    /// Fraction of the retained samples with `λ < 0`.
    pub negative_fraction: f64,
    pub bins: usize,
}

/// Number of log-spaced bins used by [`one_over_t_fit`].
pub const FIT_BINS: usize = 16;

/// Fits `ln|λ|` against `ln t` over `window`.
///
/// A finite-time exponent of bounded, oscillating divergence swings through
/// zero and both signs, so the samples are first reduced to the median
/// `|λ|` in each of [`FIT_BINS`] log-spaced time bins (paired with that
/// sample's time); the fit runs on those medians. For a clean power law the
/// medians lie on it exactly.
pub fn one_over_t_fit(times: &[f64], lambda: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != lambda.len() {
        return Err(Error::LengthMismatch { expected: times.len(), got: lambda.len() });
    }
    let t_first = times.iter().copied().find(|&t| t > 0.0).ok_or(Error::EmptyEnsemble)?;
    let t_last = *times.last().ok_or(Error::EmptyEnsemble)?;
    let lo = window.0.max(t_first);
    let hi = window.1.min(t_last);
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("fit window {window:?} lies outside the data")));
    }
    let shrunk = lo > window.0 || hi < window.1;
    let mut dropped = 0;
    let mut negative = 0;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (&t, &l) in times.iter().zip(lambda) {
        if t < lo || t > hi {
            continue;
        }
        if !l.is_finite() || l == 0.0 {
            dropped += 1;
            continue;
        }
        if l < 0.0 {
            negative += 1;
        }
        samples.push((t, l.abs()));
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let width = (ln_hi - ln_lo) / FIT_BINS as f64;
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); FIT_BINS];
    for &(t, a) in &samples {
        let b = (((t.ln() - ln_lo) / width) as usize).min(FIT_BINS - 1);
        bins[b].push((t, a));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for bin in bins.iter_mut().filter(|b| !b.is_empty()) {
        bin.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (t, a) = bin[(bin.len() - 1) / 2];
        xs.push(t.ln());
        ys.push(a.ln());
    }
    let fit = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InvalidParameter("too few populated bins for a fit".into()))?;
    Ok(DecayFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        window: (lo, hi),
        shrunk,
        dropped,
        negative_fraction: if samples.is_empty() { 0.0 } else { negative as f64 / samples.len() as f64 },
        bins: xs.len(),
    })
}

/// Largest Lyapunov exponent of the Newtonian flow by the tangent-space
/// method: the linearized leapfrog map is applied to a tangent vector that
/// is renormalized every step.
pub fn benettin_newton(spec: &SystemSpec, x0: f64, p0: f64, dt: f64, n_steps: usize, transient: usize) -> f64 {
    let (mut x, mut p) = (x0, p0);
    let (mut dx, mut dp) = (1.0, 0.0);
    let mut acc = 0.0;
    let m = spec.mass;
    for s in 0..transient + n_steps {
        let t_mid = (s as f64 + 0.5) * dt;
        let h = 0.5 * dt;
        dp += h * spec.force_derivatives(x).0 * dx;
        p += h * spec.force(x, t_mid);
        x += dt * p / m;
        dx += dt * dp / m;
        dp += h * spec.force_derivatives(x).0 * dx;
        p += h * spec.force(x, t_mid);
        let norm = (dx * dx + dp * dp).sqrt();
        if s >= transient {
            acc += norm.ln();
        }
        dx /= norm;
        dp /= norm;
    }
    acc / (n_steps as f64 * dt)
}

/// Relative change of a plateau estimate when `Δ₀` is halved; runs with a
/// change above 5% count as unconverged.
pub fn separation_audit(plateau: f64, plateau_half: f64) -> (f64, bool) {
    let change = ((plateau_half - plateau) / plateau).abs();
    (change, change < 0.05)
}
