//! Order-stable summation helpers.
//!
//! Grid quadratures go through these so that results do not depend on how
//! the pixel loop was scheduled.

use num_complex::Complex64 as C64;

/// Neumaier-compensated sum.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    }
    total + comp
}

/// Compensated complex sum (real and imaginary parts summed independently).
pub fn sum_complex(values: impl IntoIterator<Item = C64>) -> C64 {
    let mut re = Vec::new();
    let mut im = Vec::new();
    for v in values {
        re.push(v.re);
        im.push(v.im);
    }
    C64::new(sum(re), sum(im))
}

/// Wraps an angle into `(-period/2, period/2]`.
pub fn wrap(angle: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let mut a = angle.rem_euclid(period);
    if a > half {
        a -= period;
    }
    a
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(angle: f64) -> f64 {
    wrap(angle, std::f64::consts::TAU)
}
