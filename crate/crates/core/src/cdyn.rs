//! Classical evolution of weighted phase-space particles: Liouville flow,
//! the conditioned (Kushner–Stratonovich) weight update, resampling, and
//! single Newtonian trajectories.
//!
//! Drifts use the kick–drift–kick leapfrog with the force evaluated at the
//! step midpoint time, matching the quantum split-operator step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::noise::{Domain, Stream};
use crate::qdyn::MeasurementSpec;
use crate::system::SystemSpec;

/// Below this effective sample size a conditioned step refuses to run.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: f64,
    pub p: f64,
    pub w: f64,
}

/// `f_Cl(x,p) = Σ wᵢ δ(x − xᵢ) δ(p − pᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEnsemble {
    pub particles: Vec<Particle>,
    /// Weight updates that went negative and were clipped to zero.
    pub clipped: u64,
    /// Total individual weight updates performed.
    pub updates: u64,
}

impl ClassicalEnsemble {
    /// Builds an ensemble and normalizes its weights.
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if particles
            .iter()
            .any(|q| !(q.w >= 0.0) || !q.x.is_finite() || !q.p.is_finite())
        {
            return Err(Error::InvalidParameter("particles need finite coordinates and weights ≥ 0".into()));
        }
        let mut ens = ClassicalEnsemble { particles, clipped: 0, updates: 0 };
        if ens.normalize() <= 0.0 {
            return Err(Error::Degenerate(0.0));
        }
        Ok(ens)
    }

    /// Equal-weight ensemble from `(x, p)` pairs.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(x, p)| Particle { x, p, w: 1.0 }).collect())
    }

    /// `n` equal-weight particles drawn from an uncorrelated Gaussian.
    pub fn sample_gaussian(
        n: usize,
        x_mean: f64,
        p_mean: f64,
        sigma_x: f64,
        sigma_p: f64,
        seed: u64,
        stream_index: u64,
    ) -> Result<Self> {
        if !(sigma_x >= 0.0 && sigma_p >= 0.0) {
            return Err(Error::InvalidParameter("widths must be non-negative".into()));
        }
        let mut rng = Stream::new(seed, Domain::Initial, stream_index);
        let particles = (0..n)
            .map(|_| {
                let x = x_mean + sigma_x * rng.standard_normal();
                let p = p_mean + sigma_p * rng.standard_normal();
                Particle { x, p, w: 1.0 }
            })
            .collect();
        Self::new(particles)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|q| q.w).sum()
    }

    /// Rescales weights to sum to one; returns the previous total.
    pub fn normalize(&mut self) -> f64 {
        let total = self.total_weight();
        if total > 0.0 {
            for q in &mut self.particles {
                q.w /= total;
            }
        }
        total
    }

    /// `1/Σwᵢ²` for normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.particles.iter().map(|q| q.w * q.w).sum();
        let s1 = self.total_weight();
        s1 * s1 / s2
    }

    pub fn mean_position(&self) -> f64 {
        self.particles.iter().map(|q| q.w * q.x).sum::<f64>() / self.total_weight()
    }

    /// Fraction of weight updates that were clipped at zero.
    pub fn clip_rate(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.clipped as f64 / self.updates as f64
        }
    }

    /// Weighted moments; `purity` holds the effective sample size.
    pub fn moments(&self, spec: &SystemSpec, t: f64) -> Result<MomentSet> {
        if self.particles.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let total = self.total_weight();
        let (mut x, mut p) = (0.0, 0.0);
        for q in &self.particles {
            x += q.w * q.x;
            p += q.w * q.p;
        }
        x /= total;
        p /= total;
        let (mut cxx, mut cxp, mut cpp, mut energy) = (0.0, 0.0, 0.0, 0.0);
        for q in &self.particles {
            let dx = q.x - x;
            let dp = q.p - p;
            cxx += q.w * dx * dx;
            cxp += q.w * dx * dp;
            cpp += q.w * dp * dp;
            energy += q.w * (q.p * q.p / (2.0 * spec.mass) + spec.potential_at(q.x, t));
        }
        Ok(MomentSet {
            x_mean: x,
            p_mean: p,
            c_xx: cxx / total,
            c_xp: cxp / total,
            c_pp: cpp / total,
            purity: self.effective_sample_size(),
            energy: energy / total,
        })
    }
}

/// One leapfrog step of a single phase-space point.
#[inline]
pub fn leapfrog(x: &mut f64, p: &mut f64, spec: &SystemSpec, dt: f64, t: f64) {
    let t_mid = t + 0.5 * dt;
    *p += 0.5 * dt * spec.force(*x, t_mid);
    *x += dt * *p / spec.mass;
    *p += 0.5 * dt * spec.force(*x, t_mid);
}

/// Advances every particle by one leapfrog step; weights are untouched.
/// A negative `dt` (with `t` the later time) undoes a forward step.
pub fn liouville_step(ens: &mut ClassicalEnsemble, spec: &SystemSpec, dt: f64, t: f64) {
    for q in &mut ens.particles {
        leapfrog(&mut q.x, &mut q.p, spec, dt, t);
    }
}

/// Conditions the weights on one record increment and then drifts.
/// `wᵢ ← wᵢ(1 + √(8k)(xᵢ − ⟨x⟩)dW)`, clipped at zero and renormalized.
/// Returns the record increment `dy = ⟨x⟩dt + dW/√(8k)`.
pub fn ks_step(
    ens: &mut ClassicalEnsemble,
    spec: &SystemSpec,
    meas: &MeasurementSpec,
    dt: f64,
    t: f64,
    dw: f64,
) -> Result<f64> {
    let ess = ens.effective_sample_size();
    if ess <= MIN_EFFECTIVE_SAMPLE_SIZE {
        return Err(Error::Degenerate(ess));
    }
    let x_mean = ens.mean_position();
    let dy = meas.record_increment(x_mean, dt, dw)?;
    condition_weights(ens, meas.gain() * dw, x_mean);
    liouville_step(ens, spec, dt, t);
    Ok(dy)
}

/// Record-driven variant of [`ks_step`]; returns the implied innovation `dW`.
pub fn ks_filter_step(
    ens: &mut ClassicalEnsemble,
    spec: &SystemSpec,
    meas: &MeasurementSpec,
    dt: f64,
    t: f64,
    dy: f64,
) -> Result<f64> {
    let ess = ens.effective_sample_size();
    if ess <= MIN_EFFECTIVE_SAMPLE_SIZE {
        return Err(Error::Degenerate(ess));
    }
    let x_mean = ens.mean_position();
    let dw = meas.innovation(dy, x_mean, dt)?;
    condition_weights(ens, meas.gain() * dw, x_mean);
    liouville_step(ens, spec, dt, t);
    Ok(dw)
}

fn condition_weights(ens: &mut ClassicalEnsemble, kick: f64, x_mean: f64) {
    let mut clipped = 0;
    for q in &mut ens.particles {
        let w = q.w * (1.0 + kick * (q.x - x_mean));
        if w < 0.0 {
            clipped += 1;
            q.w = 0.0;
        } else {
            q.w = w;
        }
    }
    ens.clipped += clipped;
    ens.updates += ens.particles.len() as u64;
    ens.normalize();
}

/// Systematic resampling to equal weights, driven by one open-interval
/// uniform drawn from `rng`. Equal-weight ensembles are returned as is.
pub fn resample(ens: &mut ClassicalEnsemble, rng: &mut Stream) {
    let n = ens.particles.len();
    let w0 = ens.particles[0].w;
    if ens.particles.iter().all(|q| q.w == w0) {
        return;
    }
    let total = ens.total_weight();
    let step = total / n as f64;
    let mut target = rng.uniform_open() * step;
    let mut cumulative = 0.0;
    let mut out = Vec::with_capacity(n);
    for q in &ens.particles {
        cumulative += q.w;
        while target < cumulative && out.len() < n {
            out.push(Particle { x: q.x, p: q.p, w: 1.0 / n as f64 });
            target += step;
        }
    }
    // rounding can leave the final slot unfilled
    while out.len() < n {
        let last = ens.particles.iter().rev().find(|q| q.w > 0.0).unwrap_or(&ens.particles[n - 1]);
        out.push(Particle { x: last.x, p: last.p, w: 1.0 / n as f64 });
    }
    ens.particles = out;
}

/// Newtonian trajectory `(x, p)` at `n + 1` times starting from `(x0, p0)`
/// at `t0`.
pub fn newton_trajectory(x0: f64, p0: f64, spec: &SystemSpec, dt: f64, t0: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut x, mut p) = (x0, p0);
    out.push((x, p));
    for s in 0..n {
        leapfrog(&mut x, &mut p, spec, dt, t0 + s as f64 * dt);
        out.push((x, p));
    }
    out
}

/// Conditioned classical run with resampling whenever the effective sample
/// size falls below `resample_fraction · N`.
#[derive(Debug, Clone)]
pub struct KsRunner {
    pub spec: SystemSpec,
    pub meas: MeasurementSpec,
    pub resample_fraction: f64,
    rng: Stream,
    pub resamples: u64,
}

impl KsRunner {
    pub fn new(spec: SystemSpec, meas: MeasurementSpec, seed: u64, stream_index: u64) -> Self {
        KsRunner {
            spec,
            meas,
            resample_fraction: 0.5,
            rng: Stream::new(seed, Domain::Resample, stream_index),
            resamples: 0,
        }
    }

    pub fn step(&mut self, ens: &mut ClassicalEnsemble, dt: f64, t: f64, dw: f64) -> Result<f64> {
        let dy = ks_step(ens, &self.spec, &self.meas, dt, t, dw)?;
        if ens.effective_sample_size() < self.resample_fraction * ens.len() as f64 {
            resample(ens, &mut self.rng);
            self.resamples += 1;
        }
        Ok(dy)
    }
}
