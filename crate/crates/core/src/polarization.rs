//! Polarization labels and the fixed Jones-vector conventions.
//!
//! All code in the crate uses
//!
//! ```text
//! D = (H + V)/√2    A = (H − V)/√2
//! L = (H + iV)/√2   R = (H − iV)/√2
//! ```
//!
//! and the Stokes convention in which `|L⟩` has `S3 = +S0`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// A polarization state label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pol {
    H,
    V,
    D,
    A,
    L,
    R,
}

/// One of the three mutually unbiased polarization bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// {H, V}
    HV,
    /// {D, A}
    DA,
    /// {L, R}
    LR,
}

pub const ALL_POLS: [Pol; 6] = [Pol::H, Pol::V, Pol::D, Pol::A, Pol::L, Pol::R];

impl Pol {
    /// Jones vector `(h, v)` of the label.
    pub fn jones(self) -> [C64; 2] {
        let s = FRAC_1_SQRT_2;
        match self {
            Pol::H => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            Pol::V => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            Pol::D => [C64::new(s, 0.0), C64::new(s, 0.0)],
            Pol::A => [C64::new(s, 0.0), C64::new(-s, 0.0)],
            Pol::L => [C64::new(s, 0.0), C64::new(0.0, s)],
            Pol::R => [C64::new(s, 0.0), C64::new(0.0, -s)],
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            Pol::H | Pol::V => Basis::HV,
            Pol::D | Pol::A => Basis::DA,
            Pol::L | Pol::R => Basis::LR,
        }
    }

    /// The orthogonal partner within the same basis.
    pub fn orthogonal(self) -> Pol {
        match self {
            Pol::H => Pol::V,
            Pol::V => Pol::H,
            Pol::D => Pol::A,
            Pol::A => Pol::D,
            Pol::L => Pol::R,
            Pol::R => Pol::L,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pol::H => "H",
            Pol::V => "V",
            Pol::D => "D",
            Pol::A => "A",
            Pol::L => "L",
            Pol::R => "R",
        }
    }
}

impl Basis {
    /// The two states of the basis in canonical order.
    pub fn states(self) -> [Pol; 2] {
        match self {
            Basis::HV => [Pol::H, Pol::V],
            Basis::DA => [Pol::D, Pol::A],
            Basis::LR => [Pol::L, Pol::R],
        }
    }

    /// Components of an `(h, v)` Jones vector in this basis.
    pub fn from_hv(self, hv: [C64; 2]) -> [C64; 2] {
        let [e1, e2] = self.states().map(Pol::jones);
        [
            e1[0].conj() * hv[0] + e1[1].conj() * hv[1],
            e2[0].conj() * hv[0] + e2[1].conj() * hv[1],
        ]
    }

    /// `(h, v)` Jones vector from components in this basis.
    pub fn to_hv(self, c: [C64; 2]) -> [C64; 2] {
        let [e1, e2] = self.states().map(Pol::jones);
        [c[0] * e1[0] + c[1] * e2[0], c[0] * e1[1] + c[1] * e2[1]]
    }

    /// 2×2 matrix taking components in `self` to components in `target`.
    pub fn change_matrix(self, target: Basis) -> [[C64; 2]; 2] {
        let src = self.states().map(Pol::jones);
        let dst = target.states().map(Pol::jones);
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, d) in dst.iter().enumerate() {
            for (j, s) in src.iter().enumerate() {
                m[i][j] = d[0].conj() * s[0] + d[1].conj() * s[1];
            }
        }
        m
    }
}

impl fmt::Display for Pol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::HV => "HV",
            Basis::DA => "DA",
            Basis::LR => "LR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown polarization label `{0}` (expected one of H, V, D, A, L, R)")]
pub struct ParsePolError(pub String);

impl FromStr for Pol {
    type Err = ParsePolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" | "h" => Ok(Pol::H),
            "V" | "v" => Ok(Pol::V),
            "D" | "d" => Ok(Pol::D),
            "A" | "a" => Ok(Pol::A),
            "L" | "l" => Ok(Pol::L),
            "R" | "r" => Ok(Pol::R),
            other => Err(ParsePolError(other.to_string())),
        }
    }
}
