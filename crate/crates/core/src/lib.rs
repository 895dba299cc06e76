//! Simulation engine for a single continuously observed degree of freedom.
//!
//! The crate evolves quantum states (density matrices and wave functions on
//! a position grid, or their Wigner functions) and classical phase-space
//! ensembles under three kinds of dynamics: isolated, open with the
//! measurement record discarded, and conditioned on the record. On top of
//! the steppers it provides Gaussian (second-cumulant) state estimation,
//! localization-regime diagnostics, quantum-trajectory Lyapunov exponents
//! and closed-loop feedback cooling.

pub mod cdyn;
pub mod cumulant;
pub mod error;
pub mod feedback;
pub mod grid;
pub mod lyap;
pub mod moments;
pub mod noise;
pub mod qct;
pub mod qdyn;
pub mod state;
pub mod stats;
pub mod system;
pub mod wavefn;
pub mod wigner;

pub use error::{Error, Result};
pub use grid::PositionGrid;
pub use moments::{MomentSet, RawMoments};
pub use qdyn::{MeasurementRecord, MeasurementSpec, Propagator};
pub use state::{GridState, QuantumState};
pub use system::SystemSpec;
pub use wavefn::WaveFunction;
