//! Spin-to-orbit converter with charge `q`, retardation `δ` and axis offset
//! `α₀`.
//!
//! In ket space the plate maps
//!
//! ```text
//! |L, ℓ⟩ → cos(δ/2)|L, ℓ⟩ + i sin(δ/2) e^{+2iα₀} |R, ℓ + 2q⟩
//! |R, ℓ⟩ → cos(δ/2)|R, ℓ⟩ + i sin(δ/2) e^{−2iα₀} |L, ℓ − 2q⟩
//! ```
//!
//! On a sampled field it is a retarder whose fast axis sits at `qφ + α₀`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::fields::VectorField;
use crate::kets::PolKet;
use crate::polarization::{Basis, Pol};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QPlateError {
    #[error("q must be a finite half-integer, got {0}")]
    BadCharge(f64),
    #[error("retardation must lie in [0, 2π), got {0}")]
    BadRetardation(f64),
    #[error("axis offset must be finite, got {0}")]
    BadOffset(f64),
    #[error("cannot parse retardation `{0}` (use half-wave, quarter-wave or radians)")]
    BadPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QPlateParams {
    pub q: f64,
    pub delta: f64,
    #[serde(default)]
    pub alpha0: f64,
}

impl QPlateParams {
    pub fn new(q: f64, delta: f64, alpha0: f64) -> Result<Self, QPlateError> {
        let p = Self { q, delta, alpha0 };
        p.validate()?;
        Ok(p)
    }

    /// δ = π: full handedness reversal.
    pub fn half_wave(q: f64) -> Result<Self, QPlateError> {
        Self::new(q, PI, 0.0)
    }

    /// δ = π/2: equal-weight superposition of converted and unconverted light.
    pub fn quarter_wave(q: f64) -> Result<Self, QPlateError> {
        Self::new(q, FRAC_PI_2, 0.0)
    }

    pub fn validate(&self) -> Result<(), QPlateError> {
        if !self.q.is_finite() || ((2.0 * self.q).round() - 2.0 * self.q).abs() > 1e-9 {
            return Err(QPlateError::BadCharge(self.q));
        }
        if !(self.delta >= 0.0 && self.delta < TAU) {
            return Err(QPlateError::BadRetardation(self.delta));
        }
        if !self.alpha0.is_finite() {
            return Err(QPlateError::BadOffset(self.alpha0));
        }
        Ok(())
    }

    /// OAM shift `2q` imparted to converted light.
    pub fn two_q(&self) -> i32 {
        (2.0 * self.q).round() as i32
    }

    /// Retarder Jones matrix (acting on `(h, v)`) at pixel azimuth `phi`.
    pub fn jones_at(&self, phi: f64) -> [[C64; 2]; 2] {
        let beta = self.q * phi + self.alpha0;
        let c = C64::new((self.delta / 2.0).cos(), 0.0);
        let is = C64::new(0.0, (self.delta / 2.0).sin());
        let (s2, c2) = (2.0 * beta).sin_cos();
        [
            [c + is * c2, is * s2],
            [is * s2, c - is * c2],
        ]
    }
}

/// Parses a retardation preset: `half-wave`, `quarter-wave`, or radians.
pub fn parse_retardation(s: &str) -> Result<f64, QPlateError> {
    match s.trim() {
        "half-wave" => Ok(PI),
        "quarter-wave" => Ok(FRAC_PI_2),
        other => f64::from_str(other)
            .ok()
            .filter(|d| *d >= 0.0 && *d < TAU)
            .ok_or_else(|| QPlateError::BadPreset(other.to_string())),
    }
}

/// Applies the plate to a ket; the result is labelled in {L, R}.
pub fn qplate_apply_ket(k: &PolKet, p: &QPlateParams) -> PolKet {
    let circ = k.in_basis(Basis::LR);
    let c = (p.delta / 2.0).cos();
    let s = (p.delta / 2.0).sin();
    let two_q = p.two_q();
    let mut terms = Vec::with_capacity(2 * circ.len());
    for (pol, ell, amp) in circ.terms() {
        terms.push((pol, ell, amp * c));
        let (target, shift, phase) = match pol {
            Pol::L => (Pol::R, two_q, 2.0 * p.alpha0),
            Pol::R => (Pol::L, -two_q, -2.0 * p.alpha0),
            _ => unreachable!("ket converted to the LR basis"),
        };
        terms.push((target, ell + shift, amp * C64::new(0.0, s) * C64::from_polar(1.0, phase)));
    }
    let mut out = PolKet::from_terms(terms);
    if out.is_empty() {
        out = PolKet::empty(Basis::LR);
    }
    out
}

/// Applies the plate pointwise to a sampled field; output is in {H, V}.
pub fn qplate_apply_field(f: &VectorField, p: &QPlateParams) -> VectorField {
    let p = *p;
    f.map_jones(move |x, y, hv| {
        let m = p.jones_at(y.atan2(x));
        [
            m[0][0] * hv[0] + m[0][1] * hv[1],
            m[1][0] * hv[0] + m[1][1] * hv[1],
        ]
    })
}
