//! The measured particle: mass, ħ, and a driven quartic-capped potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial degree accepted for the static potential.
pub const MAX_DEGREE: usize = 4;

/// A single degree of freedom with Hamiltonian `p²/2m + V(x,t)` where
///
/// ```text
/// V(x,t) = Σ cₙ xⁿ + Λ x cos(ωt) − u x
/// ```
///
/// `u` is the control force written by feedback loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub mass: f64,
    pub hbar: f64,
    /// Coefficients c₀..c₄ of the static potential.
    pub potential: [f64; MAX_DEGREE + 1],
    pub drive_amplitude: f64,
    pub drive_frequency: f64,
    pub control: f64,
}

impl SystemSpec {
    /// Builds a quantum system. `coeffs` lists c₀, c₁, ... and may be shorter
    /// than five entries; any nonzero coefficient past x⁴ is rejected.
    pub fn new(mass: f64, hbar: f64, coeffs: &[f64]) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hbar must be positive for a quantum system, got {hbar}"
            )));
        }
        Self::build(mass, hbar, coeffs)
    }

    /// Builds a classical system (ħ = 0).
    pub fn classical(mass: f64, coeffs: &[f64]) -> Result<Self> {
        Self::build(mass, 0.0, coeffs)
    }

    fn build(mass: f64, hbar: f64, coeffs: &[f64]) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        let mut potential = [0.0; MAX_DEGREE + 1];
        for (n, &c) in coeffs.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!("coefficient c{n} is not finite")));
            }
            if n > MAX_DEGREE {
                if c != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "potential degree {n} exceeds the quartic cap"
                    )));
                }
            } else {
                potential[n] = c;
            }
        }
        Ok(SystemSpec {
            mass,
            hbar,
            potential,
            drive_amplitude: 0.0,
            drive_frequency: 0.0,
            control: 0.0,
        })
    }

    /// Harmonic oscillator `½ m ω² x²`.
    pub fn harmonic(mass: f64, hbar: f64, omega: f64) -> Result<Self> {
        Self::new(mass, hbar, &[0.0, 0.0, 0.5 * mass * omega * omega])
    }

    pub fn with_drive(mut self, amplitude: f64, frequency: f64) -> Self {
        self.drive_amplitude = amplitude;
        self.drive_frequency = frequency;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn is_quantum(&self) -> bool {
        self.hbar > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        Self::build(self.mass, self.hbar, &self.potential).map(|_| ())?;
        if self.hbar < 0.0 {
            return Err(Error::InvalidParameter("hbar must be non-negative".into()));
        }
        Ok(())
    }

    /// Coefficient of the time-dependent linear term, `Λcos ωt − u`.
    pub fn linear_term(&self, t: f64) -> f64 {
        self.drive_force(t) - self.control
    }

    fn drive_force(&self, t: f64) -> f64 {
        if self.drive_amplitude == 0.0 {
            0.0
        } else {
            self.drive_amplitude * (self.drive_frequency * t).cos()
        }
    }

    /// Static part `Σ cₙ xⁿ` only.
    pub fn static_potential(&self, x: f64) -> f64 {
        let c = &self.potential;
        c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])))
    }

    /// Full effective potential including drive and control.
    pub fn potential_at(&self, x: f64, t: f64) -> f64 {
        self.static_potential(x) + (self.drive_force(t) - self.control) * x
    }

    /// `F(x,t) = −∂ₓV(x,t)`.
    pub fn force(&self, x: f64, t: f64) -> f64 {
        let c = &self.potential;
        let dv = c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4]));
        -(dv + self.drive_force(t) - self.control)
    }

    /// `(∂ₓF, ∂ₓ²F, ∂ₓ³F)` at `x`. The drive and control are linear in x,
    /// so these are time independent.
    pub fn force_derivatives(&self, x: f64) -> (f64, f64, f64) {
        let c = &self.potential;
        let d2v = 2.0 * c[2] + x * (6.0 * c[3] + x * 12.0 * c[4]);
        let d3v = 6.0 * c[3] + x * 24.0 * c[4];
        let d4v = 24.0 * c[4];
        (-d2v, -d3v, -d4v)
    }

    /// `∂ₓ³V`, the coefficient of the only surviving Moyal correction.
    pub fn third_derivative(&self, x: f64) -> f64 {
        -self.force_derivatives(x).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(SystemSpec::new(0.0, 1.0, &[0.0, 0.0, 0.5]).is_err());
        assert!(SystemSpec::new(1.0, 0.0, &[0.0, 0.0, 0.5]).is_err());
        assert!(SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(SystemSpec::classical(1.0, &[0.0, 0.0, 0.5]).is_ok());
    }

    #[test]
    fn force_matches_finite_difference() {
        let spec = SystemSpec::new(1.0, 1.0, &[0.3, -0.2, -10.0, 0.7, 0.5])
            .unwrap()
            .with_drive(10.0, 6.07);
        let h = 1e-5;
        for &x in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
            let t = 0.37;
            let fd = -(spec.potential_at(x + h, t) - spec.potential_at(x - h, t)) / (2.0 * h);
            assert!((spec.force(x, t) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            let (f1, _, _) = spec.force_derivatives(x);
            let fd1 = (spec.force(x + h, t) - spec.force(x - h, t)) / (2.0 * h);
            assert!((f1 - fd1).abs() < 1e-5 * (1.0 + fd1.abs()));
        }
    }

    #[test]
    fn control_enters_as_linear_force() {
        let mut spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        spec.control = 2.5;
        assert_eq!(spec.force(0.0, 0.0), 2.5);
        assert_eq!(spec.potential_at(1.0, 0.0), 0.5 - 2.5);
    }
}
