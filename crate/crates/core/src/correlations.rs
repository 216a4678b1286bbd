//! Polarization-correlation fringes of the two-photon source.
//!
//! The idler analyzer is fixed while a linear polarizer on the signal arm is
//! swept; the coincidence rate is fitted with `a + b·cos2θ + c·sin2θ` and
//! the visibility is `√(b² + c²)/a`.
//!
//! Imperfections are modeled by two knobs: a white-noise fraction `p`
//! (the state is mixed with the maximally mixed state, lowering visibility
//! in every basis) and the inter-crystal phase, which only dephases
//! superposition-basis fringes.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kets::{
    coincidence_probability, spdc_state, KetError, PolKet, SignalAnalyzer, SpdcConfig,
};
use crate::numeric::sum;
use crate::polarization::{Basis, Pol};

/// Visibility measured in the {H, V} basis by the reference experiment.
pub const REFERENCE_VISIBILITY_HV: f64 = 0.9812;
/// Visibility measured in the {D, A} basis by the reference experiment.
pub const REFERENCE_VISIBILITY_DA: f64 = 0.9617;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("white-noise fraction must lie in [0, 1), got {0}")]
    BadNoise(f64),
    #[error("need at least 3 analyzer angles, got {0}")]
    TooFewSamples(usize),
    #[error("target visibility {0} is outside the reachable range")]
    Unreachable(f64),
    #[error("fringe fit is singular")]
    SingularFit,
    #[error(transparent)]
    Ket(#[from] KetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeConfig {
    /// Pump polarization (ℓ = 0).
    pub pump: Pol,
    /// White-noise admixture `p`.
    #[serde(default)]
    pub noise: f64,
    /// Inter-crystal phase.
    #[serde(default)]
    pub phi_crystal: f64,
    /// Signal polarizer settings, evenly spaced over [0, π).
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    36
}

impl Default for FringeConfig {
    fn default() -> Self {
        Self {
            pump: Pol::D,
            noise: 0.0,
            phi_crystal: 0.0,
            samples: default_samples(),
        }
    }
}

impl FringeConfig {
    pub fn validate(&self) -> Result<(), CorrelationError> {
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return Err(CorrelationError::BadNoise(self.noise));
        }
        if self.samples < 3 {
            return Err(CorrelationError::TooFewSamples(self.samples));
        }
        Ok(())
    }
}

/// `a + b·cos2θ + c·sin2θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub offset: f64,
    pub cos2: f64,
    pub sin2: f64,
}

impl CosineFit {
    pub fn visibility(&self) -> f64 {
        self.cos2.hypot(self.sin2) / self.offset
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = (2.0 * theta).sin_cos();
        self.offset + self.cos2 * c + self.sin2 * s
    }
}

/// Least-squares fit of `a + b·cos2θ + c·sin2θ`.
pub fn fit_cosine(thetas: &[f64], values: &[f64]) -> Result<CosineFit, CorrelationError> {
    if thetas.len() < 3 || thetas.len() != values.len() {
        return Err(CorrelationError::TooFewSamples(thetas.len().min(values.len())));
    }
    let basis = |t: f64| {
        let (s, c) = (2.0 * t).sin_cos();
        [1.0, c, s]
    };
    let rows: Vec<[f64; 3]> = thetas.iter().map(|&t| basis(t)).collect();
    let normal = Matrix3::from_fn(|i, j| sum(rows.iter().map(|r| r[i] * r[j])));
    let rhs = Vector3::from_fn(|i, _| sum(rows.iter().zip(values).map(|(r, v)| r[i] * v)));
    let x = normal
        .lu()
        .solve(&rhs)
        .ok_or(CorrelationError::SingularFit)?;
    Ok(CosineFit {
        offset: x[0],
        cos2: x[1],
        sin2: x[2],
    })
}

/// One fringe: fixed idler analyzer, swept signal polarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fringe {
    pub idler: Pol,
    pub thetas: Vec<f64>,
    pub rates: Vec<f64>,
    pub fit: CosineFit,
    pub visibility: f64,
}

/// Fringes for both idler settings of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFringes {
    pub basis: Basis,
    pub fringes: Vec<Fringe>,
}

impl BasisFringes {
    /// Mean visibility over the idler settings.
    pub fn visibility(&self) -> f64 {
        sum(self.fringes.iter().map(|f| f.visibility)) / self.fringes.len() as f64
    }
}

pub fn fringe(cfg: &FringeConfig, idler: Pol) -> Result<Fringe, CorrelationError> {
    cfg.validate()?;
    let spdc = SpdcConfig::default().with_phi_crystal(cfg.phi_crystal);
    let state = spdc_state(&PolKet::basis_state(cfg.pump, 0), &spdc)?;
    let thetas: Vec<f64> = (0..cfg.samples)
        .map(|k| PI * k as f64 / cfg.samples as f64)
        .collect();
    let rates: Vec<f64> = thetas
        .iter()
        .map(|&t| {
            let pure = coincidence_probability(&state, SignalAnalyzer::Linear(t), idler);
            (1.0 - cfg.noise) * pure + cfg.noise / 4.0
        })
        .collect();
    let fit = fit_cosine(&thetas, &rates)?;
    Ok(Fringe {
        idler,
        visibility: fit.visibility(),
        thetas,
        rates,
        fit,
    })
}

pub fn basis_fringes(cfg: &FringeConfig, basis: Basis) -> Result<BasisFringes, CorrelationError> {
    let fringes = basis
        .states()
        .into_iter()
        .map(|p| fringe(cfg, p))
        .collect::<Result<_, _>>()?;
    Ok(BasisFringes { basis, fringes })
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    f: impl Fn(f64) -> Result<f64, CorrelationError>,
) -> Result<f64, CorrelationError> {
    let (flo, fhi) = (f(lo)? - target, f(hi)? - target);
    if flo * fhi > 0.0 {
        return Err(CorrelationError::Unreachable(target));
    }
    let increasing = fhi > flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = f(mid)? > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Noise and dephasing that reproduce a pair of measured visibilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionFit {
    pub noise: f64,
    pub phi_crystal: f64,
    pub visibility_hv: f64,
    pub visibility_da: f64,
}

/// Solves for `p` from the {H, V} visibility (which ignores the crystal
/// phase), then for the crystal phase in [0, π/2] from the {D, A} one.
pub fn fit_imperfections(
    base: &FringeConfig,
    target_hv: f64,
    target_da: f64,
) -> Result<ImperfectionFit, CorrelationError> {
    let vis = |cfg: FringeConfig, b: Basis| basis_fringes(&cfg, b).map(|f| f.visibility());
    let noise = bisect(0.0, 1.0 - 1e-12, target_hv, |p| {
        vis(FringeConfig { noise: p, ..*base }, Basis::HV)
    })?;
    let phi_crystal = bisect(0.0, PI / 2.0, target_da, |phi| {
        vis(
            FringeConfig {
                noise,
                phi_crystal: phi,
                ..*base
            },
            Basis::DA,
        )
    })?;
    let cfg = FringeConfig {
        noise,
        phi_crystal,
        ..*base
    };
    Ok(ImperfectionFit {
        noise,
        phi_crystal,
        visibility_hv: vis(cfg, Basis::HV)?,
        visibility_da: vis(cfg, Basis::DA)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_known_cosine() {
        let thetas: Vec<f64> = (0..10).map(|k| 0.31 * k as f64).collect();
        let vals: Vec<f64> = thetas
            .iter()
            .map(|t| 2.0 + 0.5 * (2.0 * t).cos() - 0.25 * (2.0 * t).sin())
            .collect();
        let fit = fit_cosine(&thetas, &vals).unwrap();
        assert!((fit.offset - 2.0).abs() < 1e-12);
        assert!((fit.cos2 - 0.5).abs() < 1e-12);
        assert!((fit.sin2 + 0.25).abs() < 1e-12);
        let expect = 2.0 + 0.5 * 1.4f64.cos() - 0.25 * 1.4f64.sin();
        assert!((fit.eval(0.7) - expect).abs() < 1e-12);
    }

    #[test]
    fn ideal_fringes_have_unit_visibility() {
        for b in [Basis::HV, Basis::DA] {
            let f = basis_fringes(&FringeConfig::default(), b).unwrap();
            assert!((f.visibility() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_idler_selects_horizontal_signal() {
        let f = fringe(&FringeConfig::default(), Pol::H).unwrap();
        // pump D makes |HH⟩ + |VV⟩; rate peaks at θ = 0
        assert!(f.fit.cos2 > 0.0 && f.fit.sin2.abs() < 1e-12);
    }

    #[test]
    fn noise_scales_visibility() {
        let cfg = FringeConfig {
            noise: 0.2,
            ..Default::default()
        };
        for b in [Basis::HV, Basis::DA] {
            assert!((basis_fringes(&cfg, b).unwrap().visibility() - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn crystal_phase_only_affects_superposition_basis() {
        let cfg = FringeConfig {
            phi_crystal: 0.5,
            ..Default::default()
        };
        assert!((basis_fringes(&cfg, Basis::HV).unwrap().visibility() - 1.0).abs() < 1e-12);
        let da = basis_fringes(&cfg, Basis::DA).unwrap().visibility();
        assert!((da - 0.5f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let cfg = FringeConfig {
            noise: 1.0,
            ..Default::default()
        };
        assert!(matches!(fringe(&cfg, Pol::H), Err(CorrelationError::BadNoise(_))));
        assert!(fit_imperfections(&FringeConfig::default(), 1.5, 0.9).is_err());
    }
}
