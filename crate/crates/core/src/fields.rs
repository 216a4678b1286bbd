//! Transverse grids, scalar and two-component vector fields, and
//! Laguerre–Gauss (p = 0) mode synthesis at the waist plane.
//!
//! Coordinates are measured in units of the beam waist. Grids are symmetric
//! about the optical axis; for even sample counts the axis falls between
//! pixels, which keeps the undefined on-axis polarization off the grid.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric;
use crate::polarization::{Basis, Pol};

/// Smallest accepted sample count per axis.
pub const MIN_SAMPLES: usize = 16;
/// Largest accepted |ℓ| for mode synthesis.
pub const MAX_ELL: i32 = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("grid too small: {nx}x{ny} (need at least {MIN_SAMPLES} samples per axis)")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid half-width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("beam waist must be positive and finite, got {0}")]
    BadWaist(f64),
    #[error("|ell| = {0} exceeds the synthesis limit of {MAX_ELL}")]
    EllTooLarge(i32),
    #[error("grid mismatch between fields")]
    GridMismatch,
    #[error("sample buffer has {got} entries, grid needs {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("shift ({dx}, {dy}) moves the field out of the window (limit {limit} per axis)")]
    ShiftTooLarge { dx: f64, dy: f64, limit: f64 },
    #[error("superposition needs at least one field")]
    EmptySuperposition,
    #[error("field has zero power")]
    ZeroPower,
}

/// Regular transverse sampling grid, symmetric about the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    half_width: f64,
}

/// Builds a grid of `nx × ny` samples spanning `[-half_width, half_width]²`.
pub fn make_grid(nx: usize, ny: usize, half_width: f64) -> Result<GridSpec, FieldError> {
    GridSpec::new(nx, ny, half_width)
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, half_width: f64) -> Result<Self, FieldError> {
        if nx < MIN_SAMPLES || ny < MIN_SAMPLES {
            return Err(FieldError::GridTooSmall { nx, ny });
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(FieldError::BadHalfWidth(half_width));
        }
        Ok(Self { nx, ny, half_width })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pitch_x(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    pub fn pitch_y(&self) -> f64 {
        2.0 * self.half_width / (self.ny - 1) as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch_x() * self.pitch_y()
    }

    /// x coordinate of column `i`; exactly antisymmetric about the axis.
    pub fn x(&self, i: usize) -> f64 {
        (2.0 * i as f64 - (self.nx - 1) as f64) * self.half_width / (self.nx - 1) as f64
    }

    /// y coordinate of row `j`.
    pub fn y(&self, j: usize) -> f64 {
        (2.0 * j as f64 - (self.ny - 1) as f64) * self.half_width / (self.ny - 1) as f64
    }

    /// Row-major flat index.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical coordinates of the flat index.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.x(idx % self.nx), self.y(idx / self.nx))
    }

    /// Fractional (column, row) position of a physical point.
    pub fn fractional_index(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x + self.half_width) / self.pitch_x(),
            (y + self.half_width) / self.pitch_y(),
        )
    }

    /// Bilinear interpolation of `data` at `(x, y)`; `None` outside the grid.
    pub fn bilinear<T>(&self, data: &[T], x: f64, y: f64) -> Option<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let (fx, fy) = self.fractional_index(x, y);
        let max_x = (self.nx - 1) as f64;
        let max_y = (self.ny - 1) as f64;
        let eps = 1e-9;
        if !(fx >= -eps && fy >= -eps && fx <= max_x + eps && fy <= max_y + eps) {
            return None;
        }
        let fx = fx.clamp(0.0, max_x);
        let fy = fy.clamp(0.0, max_y);
        let i0 = (fx.floor() as usize).min(self.nx - 2);
        let j0 = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = data[self.index(i0, j0)];
        let v10 = data[self.index(i0 + 1, j0)];
        let v01 = data[self.index(i0, j0 + 1)];
        let v11 = data[self.index(i0 + 1, j0 + 1)];
        Some(
            v00 * ((1.0 - tx) * (1.0 - ty))
                + v10 * (tx * (1.0 - ty))
                + v01 * ((1.0 - tx) * ty)
                + v11 * (tx * ty),
        )
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Radial profile used when rendering a helical mode of charge ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModeProfile {
    /// Laguerre–Gauss, radial index 0: `(r/w0)^|ℓ| exp(−r²/w0²) exp(iℓφ)`.
    #[default]
    LaguerreGauss,
    /// Gaussian envelope with a pure azimuthal phase: `exp(−r²/w0²) exp(iℓφ)`.
    /// This is what a thin phase element such as a q-plate imprints on a
    /// Gaussian input.
    PhaseOnly,
}

/// One analytic mode contribution `amp · profile(x − cx, y − cy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTerm {
    pub ell: i32,
    pub w0: f64,
    pub profile: ModeProfile,
    pub center: (f64, f64),
    pub amp: C64,
}

impl ModeTerm {
    fn shape(&self, x: f64, y: f64) -> C64 {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let r2 = dx * dx + dy * dy;
        let envelope = (-r2 / (self.w0 * self.w0)).exp();
        let n = self.ell.unsigned_abs();
        let sign = if self.ell >= 0 { 1.0 } else { -1.0 };
        let helical = match self.profile {
            ModeProfile::LaguerreGauss => C64::new(dx / self.w0, sign * dy / self.w0).powu(n),
            ModeProfile::PhaseOnly => {
                let r = r2.sqrt();
                if r == 0.0 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(dx / r, sign * dy / r).powu(n)
                }
            }
        };
        helical * envelope
    }

    fn eval(&self, x: f64, y: f64) -> C64 {
        self.amp * self.shape(x, y)
    }
}

/// Complex scalar amplitude sampled on a grid.
///
/// Fields built from analytic modes remember their recipe so that lateral
/// shifts can re-evaluate the modes instead of interpolating.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    samples: Vec<C64>,
    analytic: Option<Vec<ModeTerm>>,
}

fn render(grid: &GridSpec, terms: &[ModeTerm]) -> Vec<C64> {
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (x, y) = grid.point(idx);
            terms
                .iter()
                .fold(C64::new(0.0, 0.0), |acc, t| acc + t.eval(x, y))
        })
        .collect()
}

impl ScalarField {
    pub fn new(grid: GridSpec, samples: Vec<C64>) -> Result<Self, FieldError> {
        if samples.len() != grid.len() {
            return Err(FieldError::SampleCount {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        if let Some(idx) = samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FieldError::NonFinite(idx));
        }
        Ok(Self {
            grid,
            samples,
            analytic: None,
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            samples: vec![C64::new(0.0, 0.0); grid.len()],
            analytic: Some(Vec::new()),
        }
    }

    /// Renders a sum of analytic mode terms.
    pub fn from_modes(grid: GridSpec, terms: Vec<ModeTerm>) -> Self {
        let samples = render(&grid, &terms);
        Self {
            grid,
            samples,
            analytic: Some(terms),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    pub fn modes(&self) -> Option<&[ModeTerm]> {
        self.analytic.as_deref()
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.samples[self.grid.index(i, j)]
    }

    /// ∑|f|²·pixel_area.
    pub fn power(&self) -> f64 {
        numeric::sum(self.samples.iter().map(|z| z.norm_sqr())) * self.grid.pixel_area()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z * c).collect(),
            analytic: self.analytic.as_ref().map(|terms| {
                terms
                    .iter()
                    .map(|t| ModeTerm { amp: t.amp * c, ..t.clone() })
                    .collect()
            }),
        }
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        let analytic = match (&self.analytic, &other.analytic) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).cloned().collect()),
            _ => None,
        };
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            analytic,
        })
    }

    /// Pointwise map; the result is no longer analytic.
    pub fn map_points(&self, f: impl Fn(f64, f64, C64) -> C64 + Sync) -> Self {
        let grid = self.grid;
        let samples = self
            .samples
            .par_iter()
            .enumerate()
            .map(|(idx, z)| {
                let (x, y) = grid.point(idx);
                f(x, y, *z)
            })
            .collect();
        Self {
            grid,
            samples,
            analytic: None,
        }
    }

    /// Drops the analytic recipe, forcing interpolation-based operations.
    pub fn into_sampled(mut self) -> Self {
        self.analytic = None;
        self
    }

    /// Intensity-weighted centroid `(x̄, ȳ)`.
    pub fn centroid(&self) -> (f64, f64) {
        let w: Vec<f64> = self.samples.iter().map(|z| z.norm_sqr()).collect();
        let total = numeric::sum(w.iter().copied());
        let sx = numeric::sum(w.iter().enumerate().map(|(i, wi)| wi * self.grid.point(i).0));
        let sy = numeric::sum(w.iter().enumerate().map(|(i, wi)| wi * self.grid.point(i).1));
        (sx / total, sy / total)
    }

    /// Bilinear sample at a physical point (zero outside the window).
    pub fn sample(&self, x: f64, y: f64) -> C64 {
        self.grid
            .bilinear(&self.samples, x, y)
            .unwrap_or(C64::new(0.0, 0.0))
    }
}

fn validate_mode(ell: i32, w0: f64) -> Result<(), FieldError> {
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(FieldError::BadWaist(w0));
    }
    if ell.abs() > MAX_ELL {
        return Err(FieldError::EllTooLarge(ell));
    }
    Ok(())
}

/// Unit-power helical mode of charge `ell` with the requested radial profile,
/// centred on the axis.
pub fn mode(
    grid: &GridSpec,
    ell: i32,
    w0: f64,
    profile: ModeProfile,
) -> Result<ScalarField, FieldError> {
    validate_mode(ell, w0)?;
    let term = ModeTerm {
        ell,
        w0,
        profile,
        center: (0.0, 0.0),
        amp: C64::new(1.0, 0.0),
    };
    let raw = ScalarField::from_modes(*grid, vec![term]);
    let power = raw.power();
    Ok(raw.scaled(C64::new(1.0 / power.sqrt(), 0.0)))
}

/// Unit-power Laguerre–Gauss mode (p = 0) of charge `ell` at the waist plane.
pub fn lg_mode(grid: &GridSpec, ell: i32, w0: f64) -> Result<ScalarField, FieldError> {
    mode(grid, ell, w0, ModeProfile::LaguerreGauss)
}

/// Discrete inner product `∑ conj(a)·b·pixel_area`.
pub fn overlap(a: &ScalarField, b: &ScalarField) -> Result<C64, FieldError> {
    if a.grid != b.grid {
        return Err(FieldError::GridMismatch);
    }
    let s = numeric::sum_complex(a.samples.iter().zip(&b.samples).map(|(x, y)| x.conj() * y));
    Ok(s * a.grid.pixel_area())
}

/// Shifts a field laterally by `(dx, dy)`.
///
/// Analytic fields are re-evaluated at the shifted centres; sampled fields
/// are bilinearly resampled, with zero fill outside the window.
pub fn translate(f: &ScalarField, dx: f64, dy: f64) -> Result<ScalarField, FieldError> {
    let limit = f.grid.half_width / 2.0;
    if !(dx.abs() < limit && dy.abs() < limit) {
        return Err(FieldError::ShiftTooLarge { dx, dy, limit });
    }
    if dx == 0.0 && dy == 0.0 {
        return Ok(f.clone());
    }
    if let Some(terms) = &f.analytic {
        let shifted = terms
            .iter()
            .map(|t| ModeTerm {
                center: (t.center.0 + dx, t.center.1 + dy),
                ..t.clone()
            })
            .collect();
        return Ok(ScalarField::from_modes(f.grid, shifted));
    }
    let grid = f.grid;
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (x, y) = grid.point(idx);
            f.sample(x - dx, y - dy)
        })
        .collect();
    Ok(ScalarField {
        grid,
        samples,
        analytic: None,
    })
}

/// Two-component field: amplitudes of the two states of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    basis: Basis,
    a: ScalarField,
    b: ScalarField,
}

impl VectorField {
    pub fn new(basis: Basis, a: ScalarField, b: ScalarField) -> Result<Self, FieldError> {
        if a.grid != b.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self { basis, a, b })
    }

    /// Uniformly polarized field `pol ⊗ f`.
    pub fn polarized(pol: Pol, f: ScalarField) -> Self {
        let zero = ScalarField::zeros(f.grid);
        let basis = pol.basis();
        if basis.states()[0] == pol {
            Self { basis, a: f, b: zero }
        } else {
            Self { basis, a: zero, b: f }
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.a.grid
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn comp_a(&self) -> &ScalarField {
        &self.a
    }

    pub fn comp_b(&self) -> &ScalarField {
        &self.b
    }

    pub fn power(&self) -> f64 {
        self.a.power() + self.b.power()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            basis: self.basis,
            a: self.a.scaled(c),
            b: self.b.scaled(c),
        }
    }

    pub fn normalized(&self) -> Result<Self, FieldError> {
        let p = self.power();
        if !(p > 0.0) {
            return Err(FieldError::ZeroPower);
        }
        Ok(self.scaled(C64::new(1.0 / p.sqrt(), 0.0)))
    }

    /// Jones vector `(h, v)` at flat index `idx`.
    pub fn hv_at(&self, idx: usize) -> [C64; 2] {
        self.basis.to_hv([self.a.samples[idx], self.b.samples[idx]])
    }

    /// Re-expresses the field pointwise in another basis.
    pub fn to_basis(&self, target: Basis) -> Self {
        if target == self.basis {
            return self.clone();
        }
        let m = self.basis.change_matrix(target);
        let combine = |row: [C64; 2]| -> ScalarField {
            let mut out = self.a.scaled(row[0]);
            // grids agree by construction
            out = out.add(&self.b.scaled(row[1])).expect("matching grids");
            out
        };
        Self {
            basis: target,
            a: combine(m[0]),
            b: combine(m[1]),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, FieldError> {
        Ok(Self {
            basis: self.basis,
            a: translate(&self.a, dx, dy)?,
            b: translate(&self.b, dx, dy)?,
        })
    }

    /// Pointwise 2×2 map acting on `(h, v)` Jones vectors; output in {H,V}.
    pub fn map_jones(&self, f: impl Fn(f64, f64, [C64; 2]) -> [C64; 2] + Sync) -> Self {
        let grid = *self.grid();
        let out: Vec<[C64; 2]> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (x, y) = grid.point(idx);
                f(x, y, self.hv_at(idx))
            })
            .collect();
        let h = out.iter().map(|v| v[0]).collect();
        let v = out.iter().map(|v| v[1]).collect();
        Self {
            basis: Basis::HV,
            a: ScalarField {
                grid,
                samples: h,
                analytic: None,
            },
            b: ScalarField {
                grid,
                samples: v,
                analytic: None,
            },
        }
    }

    /// Largest pointwise difference of the Jones vectors of two fields.
    pub fn max_abs_diff(&self, other: &VectorField) -> Result<f64, FieldError> {
        if self.grid() != other.grid() {
            return Err(FieldError::GridMismatch);
        }
        Ok((0..self.grid().len())
            .map(|idx| {
                let p = self.hv_at(idx);
                let q = other.hv_at(idx);
                (p[0] - q[0]).norm().max((p[1] - q[1]).norm())
            })
            .fold(0.0, f64::max))
    }
}

/// Weighted coherent sum of vector fields, renormalized to unit power.
pub fn superpose(fields: &[(VectorField, C64)]) -> Result<VectorField, FieldError> {
    let (first, _) = fields.first().ok_or(FieldError::EmptySuperposition)?;
    let basis = first.basis;
    let grid = *first.grid();
    let mut acc_a = ScalarField::zeros(grid);
    let mut acc_b = ScalarField::zeros(grid);
    for (f, w) in fields {
        if *f.grid() != grid {
            return Err(FieldError::GridMismatch);
        }
        let g = f.to_basis(basis);
        acc_a = acc_a.add(&g.a.scaled(*w))?;
        acc_b = acc_b.add(&g.b.scaled(*w))?;
    }
    VectorField::new(basis, acc_a, acc_b)?.normalized()
}
