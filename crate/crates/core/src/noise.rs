//! Seeded, counter-based Wiener increments.
//!
//! Every stream is a ChaCha20 keystream keyed by `SHA-256(domain ‖ master_seed)`
//! and selected by `stream_index`, so a stream's values depend only on its key
//! and never on which thread or in which order it is drawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Independent families of random numbers drawn from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Wiener increments driving measurement records.
    Wiener,
    /// Uniform offsets for particle resampling.
    Resample,
    /// Initial-condition sampling (particle clouds, jitter).
    Initial,
}

impl Domain {
    fn tag(self) -> &'static [u8] {
        match self {
            Domain::Wiener => b"qcond/wiener",
            Domain::Resample => b"qcond/resample",
            Domain::Initial => b"qcond/initial",
        }
    }
}

/// Deterministic random stream for one `(master_seed, domain, stream_index)`.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha20Rng,
}

impl Stream {
    pub fn new(master_seed: u64, domain: Domain, stream_index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(domain.tag());
        hasher.update(master_seed.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream_index);
        Stream { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

/// On-the-fly generator of `dW ~ N(0, dt)`.
#[derive(Debug, Clone)]
pub struct WienerStream {
    stream: Stream,
    sqrt_dt: f64,
    dt: f64,
}

impl WienerStream {
    pub fn new(master_seed: u64, stream_index: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(WienerStream {
            stream: Stream::new(master_seed, Domain::Wiener, stream_index),
            sqrt_dt: dt.sqrt(),
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn next_increment(&mut self) -> f64 {
        self.sqrt_dt * self.stream.standard_normal()
    }
}

impl Iterator for WienerStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_increment())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub master_seed: u64,
    pub stream_index: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Materializes `n_steps` increments of the stream `(master_seed, stream_index)`.
pub fn generate(master_seed: u64, stream_index: u64, n_steps: usize, dt: f64) -> Result<NoisePath> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let increments = WienerStream::new(master_seed, stream_index, dt)?
        .take(n_steps)
        .collect();
    Ok(NoisePath { master_seed, stream_index, dt, increments })
}
