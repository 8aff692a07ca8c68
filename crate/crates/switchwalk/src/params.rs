//! Constants of the operator class and their admissibility checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The constants `(d, m, Θ₁..Θ₅, γ, β, c₁, c₀, ϑ)` declaring which operator
/// class a coefficient set claims to belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    /// Spatial dimension (≥ 2).
    pub d: usize,
    /// Number of levels (≥ 2 for switching scenarios; 1 is accepted for
    /// single-level diagnostics).
    pub m: usize,
    /// Two-sided ellipticity constant: `Θ₁|ζ|² ≤ ζᵀ a ζ ≤ Θ₁⁻¹|ζ|²`.
    pub theta1: f64,
    /// Drift bound `|b₁| ≤ Θ₂`.
    pub theta2: f64,
    /// Jump-multiplier bound `0 ≤ b₂ ≤ Θ₃`.
    pub theta3: f64,
    /// Jump-mass bound `∫ (1 ∧ |z|²) jᵢ(z) dz < Θ₄`.
    pub theta4: f64,
    /// Bound on the switching-rate entries.
    pub theta5: f64,
    /// Hölder exponent of the diffusion matrix, in (0, 1).
    pub gamma: f64,
    /// Jump index in (1, 2): `jᵢ(z) ≤ c₁ |z|^{-d-β}` for small `z`.
    pub beta: f64,
    /// Small-jump kernel constant, > 0.
    pub c1: f64,
    /// Switching comparability constant, in (0, 1): `c₀ q⁰ ≤ q ≤ q⁰`.
    pub c0: f64,
    /// Jump-comparability constant of the ball-average condition, > 0.
    pub vartheta: f64,
}

impl ClassParams {
    /// Check every declared constant against its admissible range and report
    /// the first violation by name.
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParam(format!("d must be ≥ 2, got {}", self.d)));
        }
        if self.m < 1 {
            return Err(Error::InvalidParam("m must be ≥ 1".into()));
        }
        for (name, v) in [
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("theta3", self.theta3),
            ("theta4", self.theta4),
            ("theta5", self.theta5),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.theta1 > 0.0) {
            return Err(Error::InvalidParam(format!("theta1 must be > 0, got {}", self.theta1)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParam(format!("gamma ∉ (0,1): got {}", self.gamma)));
        }
        if !(self.beta > 1.0 && self.beta < 2.0) {
            return Err(Error::InvalidParam(format!("beta ∉ (1,2): got {}", self.beta)));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::InvalidParam(format!("c1 must be > 0, got {}", self.c1)));
        }
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return Err(Error::InvalidParam(format!("c0 ∉ (0,1): got {}", self.c0)));
        }
        if !(self.vartheta > 0.0) {
            return Err(Error::InvalidParam(format!("vartheta must be > 0, got {}", self.vartheta)));
        }
        Ok(())
    }

    /// Reasonable defaults for the bundled presets in dimension `d` with `m`
    /// levels: identity-scale ellipticity with room for the trigonometric
    /// perturbations.
    pub fn defaults(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            theta1: 0.5,
            theta2: 1.0,
            theta3: 1.0,
            theta4: 50.0,
            theta5: 4.0,
            gamma: 0.5,
            beta: 1.5,
            c1: 1.0,
            c0: 0.5,
            vartheta: 8.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(ClassParams::defaults(2, 2).validate().is_ok());
        assert!(ClassParams::defaults(3, 3).validate().is_ok());
    }

    #[test]
    fn each_range_violation_is_named() {
        let ok = ClassParams::defaults(3, 2);
        let mut p = ok.clone();
        p.beta = 2.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("beta ∉ (1,2)"), "message was: {err}");
        let mut p = ok.clone();
        p.gamma = 1.0;
        assert!(p.validate().unwrap_err().to_string().contains("gamma"));
        let mut p = ok.clone();
        p.c0 = 1.0;
        assert!(p.validate().unwrap_err().to_string().contains("c0"));
        let mut p = ok.clone();
        p.d = 1;
        assert!(p.validate().is_err());
        let mut p = ok;
        p.theta1 = 0.0;
        assert!(p.validate().unwrap_err().to_string().contains("theta1"));
    }
}
