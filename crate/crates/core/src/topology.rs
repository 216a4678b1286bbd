//! Polarization singularities and the azimuth topology around them.
//!
//! Everything here works on Stokes maps, so the same code runs on analytic
//! and on reconstructed data. The azimuth is `ψ = ½·atan2(S2, S1)`; the
//! disclination index of a loop is the net change of ψ divided by 2π.
//!
//! Coordinates are those of the grid (beam waists).

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kets::PumpKind;
use crate::numeric::{sum, wrap};
use crate::polarimetry::{StokesMap, DEFAULT_INTENSITY_THRESHOLD};

/// Samples on a winding loop.
pub const LOOP_SAMPLES: usize = 720;
/// Angular bins used by [`rotation_between`].
pub const ROTATION_BINS: usize = 256;
/// Candidates closer than this many pixels are merged.
pub const MERGE_PIXELS: f64 = 2.0;
/// Largest acceptable `|raw − rounded|` of an index.
pub const MAX_RESIDUAL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("loop of radius {radius} around ({x}, {y}) leaves the unmasked region")]
    MaskedLoop { x: f64, y: f64, radius: f64 },
    #[error("loop radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("winding residual {0:.3} too large for a reliable index")]
    Unreliable(f64),
    #[error("index 1 has no radial-line count")]
    UndefinedLineCount,
    #[error("pattern cannot be classified: {0}")]
    Unclassifiable(String),
    #[error("maps live on different grids")]
    GridMismatch,
    #[error("no polar ring is unmasked in both maps")]
    NoRings,
    #[error("correlation landscape is flat; rotation is ambiguous")]
    Ambiguous,
}

/// Disclination index: the raw loop winding and its nearest half-integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologicalCharge {
    pub raw: f64,
    /// Twice the rounded index.
    pub twice: i32,
}

impl TopologicalCharge {
    pub fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            twice: (2.0 * raw).round() as i32,
        }
    }

    pub fn value(&self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn residual(&self) -> f64 {
        (self.raw - self.value()).abs()
    }
}

impl fmt::Display for TopologicalCharge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// `N = |2(I_C − 1)|`.
pub fn radial_line_count(index: f64) -> Result<u32, TopologyError> {
    let twice = (2.0 * index).round() as i32;
    if twice == 2 {
        return Err(TopologyError::UndefinedLineCount);
    }
    Ok((twice - 2).unsigned_abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityKind {
    /// Circular polarization, undefined azimuth.
    CPoint,
    /// Intensity null inside a linearly polarized neighborhood.
    VPoint,
    /// No singularity: the loop surrounds a regular point.
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum TopologyClass {
    Lemon,
    Star,
    Radial,
    Hyperlemon,
    Hyperstar,
    Bipolar,
    Quadrupolar,
    Hexapolar,
    Multipolar { lobes: u32 },
    VPoint { order: i32 },
    Homogeneous,
}

impl fmt::Display for TopologyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyClass::Lemon => f.write_str("lemon"),
            TopologyClass::Star => f.write_str("star"),
            TopologyClass::Radial => f.write_str("radial"),
            TopologyClass::Hyperlemon => f.write_str("hyperlemon"),
            TopologyClass::Hyperstar => f.write_str("hyperstar"),
            TopologyClass::Bipolar => f.write_str("bipolar"),
            TopologyClass::Quadrupolar => f.write_str("quadrupolar"),
            TopologyClass::Hexapolar => f.write_str("hexapolar"),
            TopologyClass::Multipolar { lobes } => write!(f, "multipolar({lobes})"),
            TopologyClass::VPoint { order } => write!(f, "v-point({order})"),
            TopologyClass::Homogeneous => f.write_str("homogeneous"),
        }
    }
}

/// Loop diagnostics around one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub location: (f64, f64),
    pub kind: SingularityKind,
    pub index: TopologicalCharge,
    pub loop_radius: f64,
    /// Points along the loop where the ellipse is aligned with the radius.
    pub radial_lines: u32,
    /// Sign changes of the detrended azimuth along the loop.
    pub lobes: u32,
    /// Circular mean of `ψ − φ` reduced to (−π/2, π/2]; meaningful for
    /// index 1.
    pub radial_offset: f64,
}

/// Azimuth and intensity along a circle.
struct LoopTrace {
    /// Azimuth of each sample about the loop center.
    phi: Vec<f64>,
    /// Unwrapped `2ψ`, one entry past the last sample closing the loop.
    two_psi: Vec<f64>,
}

fn trace_loop(
    s: &StokesMap,
    center: (f64, f64),
    radius: f64,
    mask_fraction: f64,
) -> Result<LoopTrace, TopologyError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(TopologyError::BadRadius(radius));
    }
    let cut = mask_fraction * s.max_s0();
    let masked = || TopologyError::MaskedLoop {
        x: center.0,
        y: center.1,
        radius,
    };
    let mut phi = Vec::with_capacity(LOOP_SAMPLES);
    let mut raw = Vec::with_capacity(LOOP_SAMPLES);
    for k in 0..LOOP_SAMPLES {
        let a = TAU * k as f64 / LOOP_SAMPLES as f64;
        let (x, y) = (center.0 + radius * a.cos(), center.1 + radius * a.sin());
        let [s0, s1, s2, _] = s.sample(x, y).ok_or_else(masked)?;
        if s0 <= cut {
            return Err(masked());
        }
        phi.push(a);
        raw.push(s2.atan2(s1));
    }
    let mut two_psi = Vec::with_capacity(LOOP_SAMPLES + 1);
    two_psi.push(raw[0]);
    for k in 1..=LOOP_SAMPLES {
        let next = raw[k % LOOP_SAMPLES];
        let prev = two_psi[k - 1];
        two_psi.push(prev + wrap(next - prev, TAU));
    }
    Ok(LoopTrace { phi, two_psi })
}

impl LoopTrace {
    fn charge(&self) -> TopologicalCharge {
        let n = self.phi.len();
        TopologicalCharge::from_raw((self.two_psi[n] - self.two_psi[0]) / (2.0 * TAU))
    }

    /// Crossings of `ψ − φ` through multiples of π.
    fn radial_lines(&self) -> u32 {
        let n = self.phi.len();
        let cell = |k: usize| ((0.5 * self.two_psi[k] - self.phi[k]) / PI).floor() as i64;
        // the loop closes on the same cell shifted by the quantized winding
        let closing = cell(0) + (self.charge().twice - 2) as i64;
        (0..n)
            .map(|k| {
                let next = if k + 1 == n { closing } else { cell(k + 1) };
                (next - cell(k)).unsigned_abs() as u32
            })
            .sum()
    }

    fn lobes(&self) -> u32 {
        let n = self.phi.len();
        let vals = &self.two_psi[..n];
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-6 {
            return 0;
        }
        // remove the linear winding, then the mean
        let slope = (self.two_psi[n] - self.two_psi[0]) / TAU;
        let detrended: Vec<f64> = (0..n).map(|k| vals[k] - slope * self.phi[k]).collect();
        let mean = sum(detrended.iter().copied()) / n as f64;
        let mut changes = 0;
        for k in 0..n {
            let a = detrended[k] - mean;
            let b = detrended[(k + 1) % n] - mean;
            if (a < 0.0) != (b < 0.0) {
                changes += 1;
            }
        }
        changes
    }

    fn radial_offset(&self) -> f64 {
        let n = self.phi.len();
        let (mut c, mut s) = (0.0, 0.0);
        for k in 0..n {
            let x = self.two_psi[k] - 2.0 * self.phi[k];
            c += x.cos();
            s += x.sin();
        }
        0.5 * s.atan2(c)
    }
}

/// Winding of ψ along a circle of `loop_radius` about `center`.
pub fn disclination_index(
    s: &StokesMap,
    center: (f64, f64),
    loop_radius: f64,
) -> Result<TopologicalCharge, TopologyError> {
    let charge = trace_loop(s, center, loop_radius, DEFAULT_INTENSITY_THRESHOLD)?.charge();
    if charge.residual() > MAX_RESIDUAL {
        return Err(TopologyError::Unreliable(charge.residual()));
    }
    Ok(charge)
}

/// Full loop diagnostics about an arbitrary point, typically the beam axis.
pub fn analyze_point(
    s: &StokesMap,
    center: (f64, f64),
    loop_radius: f64,
) -> Result<SingularityReport, TopologyError> {
    let trace = trace_loop(s, center, loop_radius, DEFAULT_INTENSITY_THRESHOLD)?;
    let index = trace.charge();
    if index.residual() > MAX_RESIDUAL {
        return Err(TopologyError::Unreliable(index.residual()));
    }
    let kind = if index.twice == 0 {
        SingularityKind::Regular
    } else {
        point_kind(s, center)
    };
    Ok(SingularityReport {
        location: center,
        kind,
        index,
        loop_radius,
        radial_lines: trace.radial_lines(),
        lobes: trace.lobes(),
        radial_offset: trace.radial_offset(),
    })
}

fn point_kind(s: &StokesMap, p: (f64, f64)) -> SingularityKind {
    match s.sample(p.0, p.1) {
        Some([s0, _, _, s3]) if s0 > 0.0 && s3.abs() / s0 > 0.5 => SingularityKind::CPoint,
        _ => SingularityKind::VPoint,
    }
}

/// Zero of the plane through the four corner values of a cell, in cell
/// units; clamped to the cell.
fn cell_zero(z: [(f64, f64); 4]) -> (f64, f64) {
    // corners (0,0), (1,0), (0,1), (1,1); least-squares plane a + b·u + c·v
    let mean = |k: usize| (z.iter().map(|p| if k == 0 { p.0 } else { p.1 }).sum::<f64>()) / 4.0;
    let du = |k: usize| {
        let g = |p: (f64, f64)| if k == 0 { p.0 } else { p.1 };
        (g(z[1]) + g(z[3]) - g(z[0]) - g(z[2])) / 2.0
    };
    let dv = |k: usize| {
        let g = |p: (f64, f64)| if k == 0 { p.0 } else { p.1 };
        (g(z[2]) + g(z[3]) - g(z[0]) - g(z[1])) / 2.0
    };
    // value at the cell center is `mean`; solve mean + du·(u−½) + dv·(v−½) = 0
    let (b1, c1, b2, c2) = (du(0), dv(0), du(1), dv(1));
    let det = b1 * c2 - c1 * b2;
    if det.abs() < 1e-300 {
        return (0.5, 0.5);
    }
    let (r1, r2) = (-mean(0), -mean(1));
    let u = (r1 * c2 - c1 * r2) / det;
    let v = (b1 * r2 - r1 * b2) / det;
    ((u + 0.5).clamp(0.0, 1.0), (v + 0.5).clamp(0.0, 1.0))
}

fn half_max_radius(s: &StokesMap, p: (f64, f64), limit: f64) -> Option<f64> {
    let peak = s.max_s0();
    let step = s.grid.pitch_x().min(s.grid.pitch_y());
    let mut r = step;
    while r < limit {
        let ring: Vec<f64> = (0..16)
            .filter_map(|k| {
                let a = TAU * k as f64 / 16.0;
                s.sample(p.0 + r * a.cos(), p.1 + r * a.sin()).map(|v| v[0])
            })
            .collect();
        if ring.len() < 16 {
            return None;
        }
        if sum(ring.iter().copied()) / 16.0 >= 0.5 * peak {
            return Some(r);
        }
        r += step;
    }
    None
}

/// Locates C- and V-points from the winding of `S1 + iS2` around each grid
/// cell, then measures their index on a loop.
pub fn find_singularities(s: &StokesMap) -> Vec<SingularityReport> {
    let g = s.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let z = |i: usize, j: usize| {
        let idx = g.index(i, j);
        (s.s1[idx], s.s2[idx], s.s0[idx])
    };
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [z(i, j), z(i + 1, j), z(i + 1, j + 1), z(i, j + 1)];
            if c.iter().any(|p| !(p.2 > 0.0)) {
                continue;
            }
            // both components must carry signal somewhere nearby, not just
            // roundoff
            let rel = |k: usize| {
                let mut best = 0.0_f64;
                for jj in j.saturating_sub(1)..(j + 3).min(ny) {
                    for ii in i.saturating_sub(1)..(i + 3).min(nx) {
                        let p = z(ii, jj);
                        if p.2 > 0.0 {
                            best = best.max((if k == 0 { p.0 } else { p.1 }).abs() / p.2);
                        }
                    }
                }
                best
            };
            if rel(0) < 1e-9 || rel(1) < 1e-9 {
                continue;
            }
            let mut turn = 0.0;
            for k in 0..4 {
                let a = c[k].1.atan2(c[k].0);
                let b = c[(k + 1) % 4].1.atan2(c[(k + 1) % 4].0);
                turn += wrap(b - a, TAU);
            }
            if (turn / TAU).round() == 0.0 {
                continue;
            }
            let (u, v) = cell_zero([
                (c[0].0, c[0].1),
                (c[1].0, c[1].1),
                (c[3].0, c[3].1),
                (c[2].0, c[2].1),
            ]);
            let x = g.x(i) + u * g.pitch_x();
            let y = g.y(j) + v * g.pitch_y();
            candidates.push((x, y));
        }
    }
    let merged = merge_candidates(&candidates, MERGE_PIXELS * g.pitch_x().max(g.pitch_y()));
    let mut out = Vec::new();
    for (n, &p) in merged.iter().enumerate() {
        let nearest = merged
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != n)
            .map(|(_, q)| ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        let limit = (0.45 * nearest).min(g.half_width() / 3.0);
        let kind = point_kind(s, p);
        let radius = match kind {
            SingularityKind::VPoint => half_max_radius(s, p, limit).unwrap_or(limit),
            _ => limit,
        };
        if let Ok(mut report) = analyze_point(s, p, radius) {
            if report.index.twice == 0 {
                continue;
            }
            report.kind = kind;
            out.push(report);
        }
    }
    out.sort_by(|a, b| {
        a.location
            .1
            .total_cmp(&b.location.1)
            .then(a.location.0.total_cmp(&b.location.0))
    });
    out
}

fn merge_candidates(points: &[(f64, f64)], dist: f64) -> Vec<(f64, f64)> {
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for &p in points {
        let close = groups.iter_mut().find(|grp| {
            grp.iter()
                .any(|q| ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt() <= dist)
        });
        match close {
            Some(grp) => grp.push(p),
            None => groups.push(vec![p]),
        }
    }
    groups
        .into_iter()
        .map(|grp| {
            let n = grp.len() as f64;
            (
                sum(grp.iter().map(|p| p.0)) / n,
                sum(grp.iter().map(|p| p.1)) / n,
            )
        })
        .collect()
}

/// Names the structure described by `report` for a pump with charge `q`.
///
/// Regular points are classified by lobe count, which must equal `4q`;
/// C-points with index ≠ 1 must show `N` radial lines.
pub fn classify(
    report: &SingularityReport,
    q: f64,
    pump_kind: PumpKind,
) -> Result<TopologyClass, TopologyError> {
    if report.index.residual() > MAX_RESIDUAL {
        return Err(TopologyError::Unreliable(report.index.residual()));
    }
    let twice = report.index.twice;
    match report.kind {
        SingularityKind::VPoint => Ok(TopologyClass::VPoint { order: twice / 2 }),
        SingularityKind::CPoint => {
            if twice != 2 {
                let n = radial_line_count(report.index.value())?;
                if n != report.radial_lines {
                    return Err(TopologyError::Unclassifiable(format!(
                        "index {} implies {n} radial lines, counted {}",
                        report.index, report.radial_lines
                    )));
                }
            }
            Ok(match twice {
                1 => TopologyClass::Lemon,
                -1 => TopologyClass::Star,
                2 if report.radial_offset.abs() < 0.1 => TopologyClass::Radial,
                t if t >= 2 => TopologyClass::Hyperlemon,
                _ => TopologyClass::Hyperstar,
            })
        }
        SingularityKind::Regular => {
            let lobes = report.lobes;
            if lobes == 0 {
                return Ok(TopologyClass::Homogeneous);
            }
            if pump_kind == PumpKind::FP {
                let expected = (4.0 * q).round() as u32;
                if lobes != expected {
                    return Err(TopologyError::Unclassifiable(format!(
                        "counted {lobes} lobes, a q = {q} pump gives {expected}"
                    )));
                }
            }
            Ok(match lobes {
                2 => TopologyClass::Bipolar,
                4 => TopologyClass::Quadrupolar,
                6 => TopologyClass::Hexapolar,
                n => TopologyClass::Multipolar { lobes: n },
            })
        }
    }
}

/// Rotates a Stokes map rigidly by `angle` about the origin.
pub fn rotate_stokes(s: &StokesMap, angle: f64) -> StokesMap {
    let g = s.grid;
    let (sa, ca) = angle.sin_cos();
    let (s2a, c2a) = (2.0 * angle).sin_cos();
    let mut out = [
        vec![0.0; g.len()],
        vec![0.0; g.len()],
        vec![0.0; g.len()],
        vec![0.0; g.len()],
    ];
    for idx in 0..g.len() {
        let (x, y) = g.point(idx);
        let (xs, ys) = (ca * x + sa * y, -sa * x + ca * y);
        if let Some([s0, s1, s2, s3]) = s.sample(xs, ys) {
            out[0][idx] = s0;
            out[1][idx] = c2a * s1 - s2a * s2;
            out[2][idx] = s2a * s1 + c2a * s2;
            out[3][idx] = s3;
        }
    }
    let [s0, s1, s2, s3] = out;
    StokesMap {
        grid: g,
        s0,
        s1,
        s2,
        s3,
    }
}

/// Normalized Stokes samples on a ring: `((S1 + iS2)/S0, S3/S0)`.
fn ring(s: &StokesMap, radius: f64, cut: f64) -> Option<Vec<(f64, f64, f64)>> {
    (0..ROTATION_BINS)
        .map(|k| {
            let a = TAU * k as f64 / ROTATION_BINS as f64;
            let [s0, s1, s2, s3] = s.sample(radius * a.cos(), radius * a.sin())?;
            (s0 > cut).then(|| (s1 / s0, s2 / s0, s3 / s0))
        })
        .collect()
}

/// Angle α for which `b` best matches `a` rotated by α about the origin.
///
/// Rings of radius 0.3–2 are compared for every shift by one of
/// [`ROTATION_BINS`] angular bins, with ψ advanced by α. The peak is
/// refined parabolically. Patterns with an N-fold symmetry have several
/// equal peaks; the one closest to zero wins, positive on ties.
pub fn rotation_between(a: &StokesMap, b: &StokesMap) -> Result<f64, TopologyError> {
    if a.grid != b.grid {
        return Err(TopologyError::GridMismatch);
    }
    let (cut_a, cut_b) = (
        DEFAULT_INTENSITY_THRESHOLD * a.max_s0(),
        DEFAULT_INTENSITY_THRESHOLD * b.max_s0(),
    );
    let mut rings = Vec::new();
    for r in 0..8 {
        let radius = 0.3 + 1.7 * r as f64 / 7.0;
        if let (Some(ra), Some(rb)) = (ring(a, radius, cut_a), ring(b, radius, cut_b)) {
            rings.push((ra, rb));
        }
    }
    if rings.is_empty() {
        return Err(TopologyError::NoRings);
    }
    let n = ROTATION_BINS;
    let bin = TAU / n as f64;
    let score: Vec<f64> = (0..n)
        .map(|shift| {
            let (s2a, c2a) = (2.0 * bin * shift as f64).sin_cos();
            sum(rings.iter().flat_map(|(ra, rb)| {
                (0..n).map(move |j| {
                    let (a1, a2, a3) = ra[(j + n - shift) % n];
                    let (b1, b2, b3) = rb[j];
                    let r1 = c2a * a1 - s2a * a2;
                    let r2 = s2a * a1 + c2a * a2;
                    b1 * r1 + b2 * r2 + b3 * a3
                })
            }))
        })
        .collect();
    let hi = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = score.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo <= 1e-9 * hi.abs().max(1.0) {
        return Err(TopologyError::Ambiguous);
    }
    let tol = 1e-2 * (hi - lo);
    let mut peaks: Vec<f64> = Vec::new();
    for k in 0..n {
        let (l, c, r) = (score[(k + n - 1) % n], score[k], score[(k + 1) % n]);
        if c >= l && c > r && c >= hi - tol {
            let denom = l - 2.0 * c + r;
            let frac = if denom.abs() > 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            peaks.push(wrap(bin * (k as f64 + frac.clamp(-0.5, 0.5)), TAU));
        }
    }
    let best = peaks
        .into_iter()
        .min_by(|x, y| {
            if (x.abs() - y.abs()).abs() < 0.5 * bin {
                y.total_cmp(x)
            } else {
                x.abs().total_cmp(&y.abs())
            }
        })
        .ok_or(TopologyError::Ambiguous)?;
    Ok(if best <= -PI { best + TAU } else { best })
}
