//! First and second moments shared by every state representation.

use serde::{Deserialize, Serialize};

use crate::system::SystemSpec;

/// Means, symmetrized covariances, purity and mean energy of a state.
///
/// For classical ensembles `purity` holds the effective sample size
/// `1/Σwᵢ²` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub x_mean: f64,
    pub p_mean: f64,
    pub c_xx: f64,
    pub c_xp: f64,
    pub c_pp: f64,
    pub purity: f64,
    pub energy: f64,
}

/// Moments that are linear in the state: ⟨x⟩, ⟨p⟩, ⟨x²⟩, ⟨(xp+px)/2⟩, ⟨p²⟩.
/// Averages of these over measurement records equal the moments of the
/// record-averaged state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMoments {
    pub x: f64,
    pub p: f64,
    pub xx: f64,
    pub xp: f64,
    pub pp: f64,
}

impl RawMoments {
    pub fn as_array(&self) -> [f64; 5] {
        [self.x, self.p, self.xx, self.xp, self.pp]
    }

    pub const NAMES: [&'static str; 5] = ["<x>", "<p>", "<x^2>", "<xp>_sym", "<p^2>"];
}

impl MomentSet {
    pub fn raw(&self) -> RawMoments {
        RawMoments {
            x: self.x_mean,
            p: self.p_mean,
            xx: self.c_xx + self.x_mean * self.x_mean,
            xp: self.c_xp + self.x_mean * self.p_mean,
            pp: self.c_pp + self.p_mean * self.p_mean,
        }
    }

    /// `C_xx·C_pp − C_xp²`.
    pub fn covariance_determinant(&self) -> f64 {
        self.c_xx * self.c_pp - self.c_xp * self.c_xp
    }

    /// Five tracked moments in a fixed order: x̄, p̄, C_xx, C_xp, C_pp.
    pub fn tracked(&self) -> [f64; 5] {
        [self.x_mean, self.p_mean, self.c_xx, self.c_xp, self.c_pp]
    }

    pub const TRACKED_NAMES: [&'static str; 5] = ["x_mean", "p_mean", "c_xx", "c_xp", "c_pp"];
}

/// Builds a [`MomentSet`] from raw sums. `potential_mean` is ⟨V(x,t)⟩.
pub(crate) fn from_raw(raw: RawMoments, purity: f64, mass: f64, potential_mean: f64) -> MomentSet {
    MomentSet {
        x_mean: raw.x,
        p_mean: raw.p,
        c_xx: (raw.xx - raw.x * raw.x).max(0.0),
        c_xp: raw.xp - raw.x * raw.p,
        c_pp: (raw.pp - raw.p * raw.p).max(0.0),
        purity,
        energy: raw.pp / (2.0 * mass) + potential_mean,
    }
}

/// `⟨F⟩` together with `∂ₓF` and `∂ₓ²F` evaluated at the mean position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceMoments {
    pub mean_force: f64,
    pub slope_at_mean: f64,
    pub curvature_at_mean: f64,
}

/// Exact `⟨F⟩` for a quartic-capped potential from the first three raw
/// position moments.
pub fn force_from_position_moments(spec: &SystemSpec, t: f64, m1: f64, m2: f64, m3: f64) -> ForceMoments {
    let c = &spec.potential;
    // F = -(c1 + 2c2 x + 3c3 x² + 4c4 x³) - drive + control
    let f0 = spec.force(0.0, t);
    let mean_force = f0 - 2.0 * c[2] * m1 - 3.0 * c[3] * m2 - 4.0 * c[4] * m3;
    let (slope, curv, _) = spec.force_derivatives(m1);
    ForceMoments { mean_force, slope_at_mean: slope, curvature_at_mean: curv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip() {
        let m = MomentSet { x_mean: 2.0, p_mean: -1.0, c_xx: 0.5, c_xp: 0.1, c_pp: 0.7, purity: 1.0, energy: 0.0 };
        let r = m.raw();
        let back = from_raw(r, 1.0, 1.0, 0.0);
        for (a, b) in m.tracked().iter().zip(back.tracked()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn quartic_gaussian_force() {
        // V = x⁴/4, Gaussian x̄=1, C_xx=1: ⟨x³⟩ = x̄³ + 3x̄C_xx = 4
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
        let fm = force_from_position_moments(&spec, 0.0, 1.0, 2.0, 4.0);
        assert!((fm.mean_force + 4.0).abs() < 1e-14);
        assert_eq!(fm.slope_at_mean, -3.0);
        assert_eq!(fm.curvature_at_mean, -6.0);
    }
}
