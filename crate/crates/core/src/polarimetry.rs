//! Stokes analysis with a rotating quarter-wave plate polarimeter.
//!
//! The analyzer is a QWP at angle θ followed by a fixed horizontal
//! polarizer. Its transmitted intensity is
//!
//! ```text
//! I(θ) = ½ (S0 + S1 cos²2θ + S2 sin2θ cos2θ − S3 sin2θ)
//! ```
//!
//! With the crate's conventions (`|L⟩` ↦ `S3 = +S0`) a left-circular input
//! is extinguished at θ = π/4. Stokes vectors are recovered per pixel with
//! the SVD pseudo-inverse of the stacked rows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields::{GridSpec, VectorField};

/// Intensity mask: fraction of the peak S0 below which pixels are ignored.
pub const DEFAULT_INTENSITY_THRESHOLD: f64 = 0.05;
/// |S3|/S0 below which a pixel counts as linearly polarized.
pub const DEFAULT_LINEAR_THRESHOLD: f64 = 0.1;
/// Relative singular-value cutoff for the pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolarimetryError {
    #[error("need at least 4 distinct analyzer angles, got {0}")]
    TooFewAngles(usize),
    #[error("response matrix is rank deficient (rank {0}, need 4)")]
    RankDeficient(usize),
    #[error("frame stack has {got} frames, configuration lists {expected} angles")]
    FrameCount { expected: usize, got: usize },
    #[error("frame {index} has {got} samples, grid needs {expected}")]
    FrameSize {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame angles do not match the configuration")]
    AngleMismatch,
    #[error("grid mismatch between Stokes maps")]
    GridMismatch,
    #[error("threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
}

/// Four real Stokes grids.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesMap {
    pub grid: GridSpec,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
}

impl StokesMap {
    pub fn new(grid: GridSpec, s: [Vec<f64>; 4]) -> Result<Self, PolarimetryError> {
        for (index, comp) in s.iter().enumerate() {
            if comp.len() != grid.len() {
                return Err(PolarimetryError::FrameSize {
                    index,
                    expected: grid.len(),
                    got: comp.len(),
                });
            }
        }
        let [s0, s1, s2, s3] = s;
        Ok(Self { grid, s0, s1, s2, s3 })
    }

    pub fn components(&self) -> [&[f64]; 4] {
        [&self.s0, &self.s1, &self.s2, &self.s3]
    }

    pub fn at(&self, idx: usize) -> [f64; 4] {
        [self.s0[idx], self.s1[idx], self.s2[idx], self.s3[idx]]
    }

    pub fn max_s0(&self) -> f64 {
        self.s0.iter().copied().fold(0.0, f64::max)
    }

    /// Pixels whose S0 exceeds `fraction` of the peak.
    pub fn mask(&self, fraction: f64) -> Vec<bool> {
        let cut = fraction * self.max_s0();
        self.s0.iter().map(|&v| v > cut).collect()
    }

    /// Bilinearly interpolated Stokes vector; `None` outside the window.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 4]> {
        Some([
            self.grid.bilinear(&self.s0, x, y)?,
            self.grid.bilinear(&self.s1, x, y)?,
            self.grid.bilinear(&self.s2, x, y)?,
            self.grid.bilinear(&self.s3, x, y)?,
        ])
    }

    /// Largest `|ΔS_k|` over all pixels and components, relative to the
    /// peak S0 of `self`.
    pub fn max_relative_error(&self, other: &StokesMap) -> Result<f64, PolarimetryError> {
        if self.grid != other.grid {
            return Err(PolarimetryError::GridMismatch);
        }
        let scale = self.max_s0();
        let mut worst = 0.0_f64;
        for (a, b) in self.components().iter().zip(other.components()) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst / scale)
    }

    /// Largest `(S1²+S2²+S3²)/S0² − 1` over pixels above `fraction` of the
    /// peak intensity.
    pub fn max_excess_polarization(&self, fraction: f64) -> f64 {
        let mask = self.mask(fraction);
        (0..self.grid.len())
            .filter(|&i| mask[i])
            .map(|i| {
                let [s0, s1, s2, s3] = self.at(i);
                (s1 * s1 + s2 * s2 + s3 * s3) / (s0 * s0) - 1.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Analytic Stokes parameters of a field.
pub fn stokes_of_field(f: &VectorField) -> StokesMap {
    let grid = *f.grid();
    let per_pixel: Vec<[f64; 4]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let [h, v] = f.hv_at(idx);
            let hh = h.norm_sqr();
            let vv = v.norm_sqr();
            let cross = h * v.conj();
            [hh + vv, hh - vv, 2.0 * cross.re, -2.0 * cross.im]
        })
        .collect();
    let pick = |k: usize| per_pixel.iter().map(|s| s[k]).collect::<Vec<_>>();
    StokesMap {
        grid,
        s0: pick(0),
        s1: pick(1),
        s2: pick(2),
        s3: pick(3),
    }
}

/// Analyzer orientations of the rotating QWP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarimeterConfig {
    pub angles: Vec<f64>,
}

impl Default for PolarimeterConfig {
    /// Eight orientations in π/8 steps.
    fn default() -> Self {
        Self {
            angles: (0..8).map(|k| k as f64 * PI / 8.0).collect(),
        }
    }
}

impl PolarimeterConfig {
    pub fn new(angles: Vec<f64>) -> Result<Self, PolarimetryError> {
        let cfg = Self { angles };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PolarimetryError> {
        let mut reduced: Vec<f64> = self.angles.iter().map(|a| a.rem_euclid(PI)).collect();
        reduced.sort_by(f64::total_cmp);
        reduced.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if reduced.len() >= 2 && (reduced[0] + PI - reduced[reduced.len() - 1]).abs() < 1e-9 {
            reduced.pop();
        }
        if reduced.len() < 4 {
            return Err(PolarimetryError::TooFewAngles(reduced.len()));
        }
        let m = response_rows(&self.angles);
        let rank = m.clone().svd(false, false).rank(PINV_RCOND * max_singular(&m));
        if rank < 4 {
            return Err(PolarimetryError::RankDeficient(rank));
        }
        Ok(())
    }
}

fn max_singular(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// One row of the response: `½[1, cos²2θ, sin2θ·cos2θ, −sin2θ]`.
pub fn response_row(theta: f64) -> [f64; 4] {
    let (s, c) = (2.0 * theta).sin_cos();
    [0.5, 0.5 * c * c, 0.5 * s * c, -0.5 * s]
}

fn response_rows(angles: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(angles.len(), 4, |i, j| response_row(angles[i])[j])
}

/// Stacked analyzer response (`n_angles × 4`).
pub fn response_matrix(cfg: &PolarimeterConfig) -> Result<DMatrix<f64>, PolarimetryError> {
    cfg.validate()?;
    Ok(response_rows(&cfg.angles))
}

/// Pseudo-inverse of the response, shared across pixels.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    pinv: DMatrix<f64>,
    condition: f64,
}

impl Reconstructor {
    pub fn new(cfg: &PolarimeterConfig) -> Result<Self, PolarimetryError> {
        let m = response_matrix(cfg)?;
        let svd = m.clone().svd(true, true);
        let sv = &svd.singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let pinv = svd
            .pseudo_inverse(PINV_RCOND * smax)
            .map_err(|_| PolarimetryError::RankDeficient(0))?;
        Ok(Self {
            pinv,
            condition: smax / smin,
        })
    }

    /// 2-norm condition number of the response matrix.
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Spectral norm of the pseudo-inverse (1/σ_min).
    pub fn pinv_norm(&self) -> f64 {
        self.pinv
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, intensities: &[f64]) -> [f64; 4] {
        let v = &self.pinv * DVector::from_column_slice(intensities);
        [v[0], v[1], v[2], v[3]]
    }
}

/// Simulated intensity frames, one per analyzer angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub grid: GridSpec,
    pub angles: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

/// Intensity behind a QWP at `theta` and a horizontal polarizer.
pub fn analyzer_intensity(hv: [C64; 2], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    // components along the fast and slow axes
    let fast = hv[0] * c + hv[1] * s;
    let slow = -hv[0] * s + hv[1] * c;
    let slow = slow * C64::new(0.0, -1.0);
    (fast * c - slow * s).norm_sqr()
}

/// Jones-calculus forward model of the polarimeter.
pub fn simulate_frames(f: &VectorField, cfg: &PolarimeterConfig) -> FrameStack {
    let grid = *f.grid();
    let frames = cfg
        .angles
        .iter()
        .map(|&theta| {
            (0..grid.len())
                .into_par_iter()
                .map(|idx| analyzer_intensity(f.hv_at(idx), theta))
                .collect()
        })
        .collect();
    FrameStack {
        grid,
        angles: cfg.angles.clone(),
        frames,
    }
}

/// Per-pixel least-squares Stokes recovery.
pub fn reconstruct_stokes(
    frames: &FrameStack,
    cfg: &PolarimeterConfig,
) -> Result<StokesMap, PolarimetryError> {
    if frames.frames.len() != cfg.angles.len() {
        return Err(PolarimetryError::FrameCount {
            expected: cfg.angles.len(),
            got: frames.frames.len(),
        });
    }
    if frames.angles.len() != cfg.angles.len()
        || frames
            .angles
            .iter()
            .zip(&cfg.angles)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(PolarimetryError::AngleMismatch);
    }
    let n = frames.grid.len();
    for (index, fr) in frames.frames.iter().enumerate() {
        if fr.len() != n {
            return Err(PolarimetryError::FrameSize {
                index,
                expected: n,
                got: fr.len(),
            });
        }
    }
    let rec = Reconstructor::new(cfg)?;
    let solved: Vec<[f64; 4]> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let column: Vec<f64> = frames.frames.iter().map(|fr| fr[idx]).collect();
            rec.solve(&column)
        })
        .collect();
    let pick = |k: usize| solved.iter().map(|s| s[k]).collect::<Vec<_>>();
    StokesMap::new(frames.grid, [pick(0), pick(1), pick(2), pick(3)])
}

/// Per-pixel polarization class of the tricolor map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handedness {
    Linear,
    Left,
    Right,
}

impl Handedness {
    pub fn as_str(self) -> &'static str {
        match self {
            Handedness::Linear => "linear",
            Handedness::Left => "left",
            Handedness::Right => "right",
        }
    }
}

/// Polarization-ellipse parameters per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseMap {
    pub grid: GridSpec,
    /// Azimuth ψ ∈ (−π/2, π/2].
    pub psi: Vec<f64>,
    /// Ellipticity angle χ ∈ [−π/4, π/4].
    pub chi: Vec<f64>,
    /// `None` for masked pixels.
    pub class: Vec<Option<Handedness>>,
}

impl EllipseMap {
    pub fn count(&self, h: Handedness) -> usize {
        self.class.iter().filter(|c| **c == Some(h)).count()
    }

    pub fn unmasked(&self) -> usize {
        self.class.iter().filter(|c| c.is_some()).count()
    }
}

/// Ellipse azimuth from Stokes components.
pub fn azimuth(s1: f64, s2: f64) -> f64 {
    0.5 * s2.atan2(s1)
}

pub fn ellipse_map(
    s: &StokesMap,
    linear_threshold: f64,
    intensity_threshold: f64,
) -> Result<EllipseMap, PolarimetryError> {
    for t in [linear_threshold, intensity_threshold] {
        if !(t > 0.0 && t < 1.0) {
            return Err(PolarimetryError::BadThreshold(t));
        }
    }
    let mask = s.mask(intensity_threshold);
    let n = s.grid.len();
    let mut psi = Vec::with_capacity(n);
    let mut chi = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    for idx in 0..n {
        let [s0, s1, s2, s3] = s.at(idx);
        let mut p = azimuth(s1, s2);
        if p <= -PI / 2.0 {
            p += PI;
        }
        psi.push(p);
        let ratio = if s0 > 0.0 { (s3 / s0).clamp(-1.0, 1.0) } else { 0.0 };
        chi.push(0.5 * ratio.asin());
        class.push(mask[idx].then(|| {
            if ratio.abs() < linear_threshold {
                Handedness::Linear
            } else if ratio > 0.0 {
                Handedness::Left
            } else {
                Handedness::Right
            }
        }));
    }
    Ok(EllipseMap {
        grid: s.grid,
        psi,
        chi,
        class,
    })
}
