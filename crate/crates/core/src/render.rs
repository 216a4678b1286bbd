//! Binary PPM previews: grayscale intensity with polarization-ellipse glyphs.
//!
//! Glyph colors: green for linear, blue for left-handed, red for
//! right-handed polarization.

use std::f64::consts::TAU;

use crate::polarimetry::{EllipseMap, Handedness, StokesMap};

/// Default glyph lattice pitch in pixels.
pub const GLYPH_STRIDE: usize = 16;

const GREEN: [u8; 3] = [0, 200, 0];
const BLUE: [u8; 3] = [40, 90, 255];
const RED: [u8; 3] = [230, 30, 30];

/// An RGB raster with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0; 3 * width * height],
        }
    }

    pub fn put(&mut self, col: i64, row: i64, color: [u8; 3]) {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return;
        }
        let k = 3 * (row as usize * self.width + col as usize);
        self.rgb[k..k + 3].copy_from_slice(&color);
    }

    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        let k = 3 * (row * self.width + col);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }

    /// Binary `P6` encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

fn glyph_color(h: Handedness) -> [u8; 3] {
    match h {
        Handedness::Linear => GREEN,
        Handedness::Left => BLUE,
        Handedness::Right => RED,
    }
}

/// Grayscale S0 underlay with an ellipse glyph every `stride` pixels.
pub fn render_preview(s: &StokesMap, e: &EllipseMap, stride: usize) -> Image {
    let g = s.grid;
    let (w, h) = (g.nx(), g.ny());
    let mut img = Image::new(w, h);
    let peak = s.max_s0();
    for j in 0..h {
        for i in 0..w {
            let v = if peak > 0.0 { s.s0[g.index(i, j)] / peak } else { 0.0 };
            let level = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put(i as i64, (h - 1 - j) as i64, [level; 3]);
        }
    }
    let stride = stride.max(2);
    let size = 0.42 * stride as f64;
    for j in (stride / 2..h).step_by(stride) {
        for i in (stride / 2..w).step_by(stride) {
            let idx = g.index(i, j);
            let Some(class) = e.class[idx] else { continue };
            let scale = if peak > 0.0 { (s.s0[idx] / peak).sqrt().max(0.35) } else { 0.0 };
            draw_ellipse(
                &mut img,
                i as f64,
                (h - 1 - j) as f64,
                size * scale,
                e.psi[idx],
                e.chi[idx],
                glyph_color(class),
            );
        }
    }
    img
}

/// Outline of an ellipse with semi-axes `a·cos χ`, `a·|sin χ|` and azimuth
/// `psi` (counter-clockwise on screen). Linear states become line segments.
fn draw_ellipse(img: &mut Image, cx: f64, cy: f64, a: f64, psi: f64, chi: f64, color: [u8; 3]) {
    let major = a * chi.cos();
    let minor = a * chi.sin().abs();
    let (sp, cp) = psi.sin_cos();
    let steps = ((TAU * a).ceil() as usize * 2).max(16);
    for k in 0..steps {
        let t = TAU * k as f64 / steps as f64;
        let (u, v) = (major * t.cos(), minor * t.sin());
        let x = cx + u * cp - v * sp;
        // screen rows grow downward
        let y = cy - (u * sp + v * cp);
        img.put(x.round() as i64, y.round() as i64, color);
    }
}
