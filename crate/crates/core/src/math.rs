//! Special functions and array-response primitives.
//!
//! All angles are radians. `angle_x` is the angle between the line of sight
//! and the x-axis array, `angle_y` the angle to the y-axis array; both live in
//! `(0, pi)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{IsacError, Result};

/// Complex column vector used for steering vectors and channels.
pub type CVector = DVector<Complex64>;

/// Margin kept between an angle and the endpoints `0`, `pi` wherever a
/// `1 / sin` factor is evaluated.
pub const ANGLE_MARGIN: f64 = 1e-3;

/// Default truncation order of the `h(x, y)` series.
pub const DEFAULT_SERIES_ORDER: usize = 3;

/// Below this value of `|sin(pi x / 2)|` the Fejér kernel is evaluated through
/// its geometric-sum form.
const FEJER_SINGULAR_TOL: f64 = 1e-8;

/// Clamp an angle into `[ANGLE_MARGIN, pi - ANGLE_MARGIN]`.
pub fn clamp_angle(angle: f64) -> f64 {
    angle.clamp(ANGLE_MARGIN, PI - ANGLE_MARGIN)
}

fn unit_phasor(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Response of an `m`-element half-wavelength ULA: entry `k` is
/// `exp(-j pi k cos(angle))`.
pub fn steering_ula(angle: f64, m: usize) -> Result<CVector> {
    if m == 0 {
        return Err(IsacError::InvalidDimension(
            "array needs at least one antenna".into(),
        ));
    }
    let c = angle.cos();
    Ok(CVector::from_iterator(
        m,
        (0..m).map(|k| unit_phasor(-PI * k as f64 * c)),
    ))
}

/// Response of the `lx x ly` surface toward the RSU.
///
/// Element `ix * ly + iy` (zero based) equals
/// `exp(+j pi ix cos(angle_x)) * exp(-j pi iy cos(angle_y))`, i.e. the
/// Kronecker product of an x-axis and a y-axis progression.
pub fn steering_upa(angle_x: f64, angle_y: f64, lx: usize, ly: usize) -> Result<CVector> {
    if lx == 0 || ly == 0 {
        return Err(IsacError::InvalidDimension(format!(
            "surface must have nonzero size, got {lx}x{ly}"
        )));
    }
    let cx = angle_x.cos();
    let cy = angle_y.cos();
    let mut out = CVector::zeros(lx * ly);
    for ix in 0..lx {
        for iy in 0..ly {
            out[ix * ly + iy] = unit_phasor(PI * ix as f64 * cx - PI * iy as f64 * cy);
        }
    }
    Ok(out)
}

/// Fejér kernel `F_m(x) = (1/m) (sin(m pi x / 2) / sin(pi x / 2))^2`.
///
/// This is the array gain of an `m`-element uniform array whose pointing is
/// off by `x` in cosine space; `F_m(0) = m` and the kernel has period 2.
/// `m = 0` yields `0`.
pub fn fejer_kernel(x: f64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    // Reduce to one period first; the subtraction is exact and keeps the
    // small denominator accurate near every multiple of 2.
    let x = x - 2.0 * (0.5 * x).round();
    let den = (0.5 * PI * x).sin();
    if den.abs() < FEJER_SINGULAR_TOL {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            acc += unit_phasor(PI * i as f64 * x);
        }
        return acc.norm_sqr() / mf;
    }
    let num = (0.5 * mf * PI * x).sin();
    (num * num) / (mf * den * den)
}

/// Arguments of the angle spectrum `h(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSpectrumParams {
    /// Angle, radians, in `(0, pi)`.
    pub x: f64,
    /// Angle variance, radians squared, `> 0`.
    pub y: f64,
    /// Series truncation: terms `k = -k_max ..= k_max` are summed.
    pub k_max: usize,
}

impl AngleSpectrumParams {
    pub fn new(x: f64, y: f64, k_max: usize) -> Result<Self> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(IsacError::InvalidParameter(format!(
                "angle variance must be positive and finite, got {y}"
            )));
        }
        if k_max == 0 {
            return Err(IsacError::InvalidParameter("k_max must be >= 1".into()));
        }
        if !(x > 0.0 && x < PI) || x.sin() <= f64::EPSILON {
            return Err(IsacError::SingularAngle(x));
        }
        Ok(Self { x, y, k_max })
    }
}

/// Angle spectrum `h(x, y)`.
///
/// `h(x, y) = sum_k (e^{-2 k^2 pi^2 / y} + e^{-2 ((k+1) pi - x)^2 / y}) / (sqrt(2 pi y) |sin x|)`
///
/// It is the large-array limit of `E[F_L(2 (cos x' - cos x))]` when the true
/// angle `x'` is Gaussian around `x` with variance `y`. The exponent is also
/// commonly written `(2 k pi)^2 / (2 y)`; both are the same number.
pub fn h_series(params: &AngleSpectrumParams) -> f64 {
    let AngleSpectrumParams { x, y, k_max } = *params;
    let k_max = k_max as i64;
    let mut acc = 0.0;
    // Sum the small terms first.
    for k in (-k_max..=k_max).rev().filter(|k| *k != 0) {
        let kf = k as f64;
        acc += (-2.0 * kf * kf * PI * PI / y).exp();
        let w = (kf + 1.0) * PI - x;
        acc += (-2.0 * w * w / y).exp();
    }
    acc += 1.0 + (-2.0 * (PI - x).powi(2) / y).exp();
    acc / ((2.0 * PI * y).sqrt() * x.sin().abs())
}

/// `h(x, y)` with the default truncation order.
pub fn h(x: f64, y: f64) -> Result<f64> {
    Ok(h_series(&AngleSpectrumParams::new(x, y, DEFAULT_SERIES_ORDER)?))
}

/// `h(x, y)` extended to `y = 0`.
///
/// Without angle error the averaged array gain is no longer spread over the
/// error density; `peak` is the value it takes there instead.
pub fn h_or_peak(x: f64, y: f64, k_max: usize, peak: f64) -> Result<f64> {
    if y == 0.0 {
        if !(x > 0.0 && x < PI) {
            return Err(IsacError::SingularAngle(x));
        }
        return Ok(peak);
    }
    Ok(h_series(&AngleSpectrumParams::new(x, y, k_max)?))
}

/// `h(x, y)` keeping only the `k = 0` term:
/// `(1 + e^{-2 (pi - x)^2 / y}) / (sqrt(2 pi y) |sin x|)`.
pub fn h_tilde(x: f64, y: f64) -> Result<f64> {
    let p = AngleSpectrumParams::new(x, y, 1)?;
    Ok((1.0 + (-2.0 * (PI - p.x).powi(2) / p.y).exp()) / ((2.0 * PI * p.y).sqrt() * p.x.sin()))
}

/// Density of `y = 2 cos(center + w) - 2 cos(center)` for `w ~ N(0, variance)`.
///
/// The support is `|y/2 + cos(center)| < 1`. Offsets exactly on the boundary
/// return `0`; offsets beyond it are an error.
pub fn wrapped_gaussian_pdf(y_offset: f64, center: f64, variance: f64, k_max: usize) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(IsacError::InvalidParameter(format!(
            "variance must be positive, got {variance}"
        )));
    }
    let c = 0.5 * y_offset + center.cos();
    if c.abs() > 1.0 {
        return Err(IsacError::OutOfSupport(y_offset));
    }
    let s2 = 1.0 - c * c;
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    let acos = c.acos();
    let two_var = 2.0 * variance;
    let k_max = k_max as i64;
    let mut acc = 0.0;
    for k in -k_max..=k_max {
        let kf = k as f64;
        let a = 2.0 * (kf + 1.0) * PI - acos - center;
        let b = 2.0 * kf * PI + acos - center;
        acc += (-a * a / two_var).exp() + (-b * b / two_var).exp();
    }
    Ok(acc / (s2.sqrt() * 2.0 * (2.0 * PI * variance).sqrt()))
}
