//! Surface phase design and the beamforming gains it produces.
//!
//! With the phase profiles below every gain collapses to a product of Fejér
//! kernels of the cosine-space pointing error. The direct quadratic forms are
//! kept alongside for profiles that are not aligned (random phases).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::math::{fejer_kernel, steering_ula, steering_upa, CVector};

/// Angles the RSU and the surface steer toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamPointing {
    pub angle_x: f64,
    pub angle_y: f64,
}

impl BeamPointing {
    pub fn new(angle_x: f64, angle_y: f64) -> Self {
        Self { angle_x, angle_y }
    }
}

/// Wrap a phase into `[0, 2 pi)`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn linear_phase_profile(grad_x: f64, grad_y: f64, lx: usize, ly: usize, theta0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(lx * ly);
    for ix in 0..lx {
        for iy in 0..ly {
            out.push(wrap_phase(PI * ix as f64 * grad_x + PI * iy as f64 * grad_y + theta0));
        }
    }
    out
}

/// Reflection phases that send the echo straight back to the RSU:
/// gradients `-2 cos(angle_x)` along x and `2 cos(angle_y)` along y.
pub fn optimal_reflect_phases(point: BeamPointing, lx: usize, ly: usize, theta0: f64) -> Vec<f64> {
    linear_phase_profile(
        -2.0 * point.angle_x.cos(),
        2.0 * point.angle_y.cos(),
        lx,
        ly,
        theta0,
    )
}

/// Refraction phases that steer the RSU signal onto the in-vehicle device
/// with direction cosines `(phi_u, omega_u)`.
pub fn optimal_refract_phases(
    point: BeamPointing,
    phi_u: f64,
    omega_u: f64,
    lx: usize,
    ly: usize,
    theta0: f64,
) -> Vec<f64> {
    linear_phase_profile(
        -point.angle_x.cos() + phi_u,
        point.angle_y.cos() + omega_u,
        lx,
        ly,
        theta0,
    )
}

/// Per-slot surface configuration with a common power split.
#[derive(Debug, Clone, PartialEq)]
pub struct IosProfile {
    pub lx: usize,
    pub ly: usize,
    pub refract_phases: Vec<f64>,
    pub reflect_phases: Vec<f64>,
    pub beta_t: f64,
    pub beta_r: f64,
}

impl IosProfile {
    pub fn new(
        lx: usize,
        ly: usize,
        refract_phases: Vec<f64>,
        reflect_phases: Vec<f64>,
        beta_r: f64,
    ) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(IsacError::InvalidDimension(format!("surface {lx}x{ly}")));
        }
        let l = lx * ly;
        if refract_phases.len() != l || reflect_phases.len() != l {
            return Err(IsacError::InvalidDimension(format!(
                "phase arrays must have {l} entries, got {} and {}",
                refract_phases.len(),
                reflect_phases.len()
            )));
        }
        if !(0.0..=1.0).contains(&beta_r) {
            return Err(IsacError::InvalidParameter(format!(
                "reflect power ratio must lie in [0, 1], got {beta_r}"
            )));
        }
        Ok(Self {
            lx,
            ly,
            refract_phases,
            reflect_phases,
            beta_t: 1.0 - beta_r,
            beta_r,
        })
    }

    /// S&C-phase profile: both phase sets aligned to `point`.
    pub fn aligned(
        point: BeamPointing,
        phi_u: f64,
        omega_u: f64,
        lx: usize,
        ly: usize,
        beta_r: f64,
    ) -> Result<Self> {
        Self::new(
            lx,
            ly,
            optimal_refract_phases(point, phi_u, omega_u, lx, ly, 0.0),
            optimal_reflect_phases(point, lx, ly, 0.0),
            beta_r,
        )
    }

    /// Communication-only profile: everything refracted.
    pub fn communication_only(
        point: BeamPointing,
        phi_u: f64,
        omega_u: f64,
        lx: usize,
        ly: usize,
    ) -> Result<Self> {
        Self::aligned(point, phi_u, omega_u, lx, ly, 0.0)
    }

    pub fn len(&self) -> usize {
        self.lx * self.ly
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `beta_r L_x L_y F_Lx(2 dcos_x) F_Ly(2 dcos_y)`: reflected gain
/// `|a_I^T Theta_R a_I|^2` of a profile built by [`optimal_reflect_phases`].
pub fn passive_beamforming_gain(
    profile: &IosProfile,
    point: BeamPointing,
    true_x: f64,
    true_y: f64,
) -> f64 {
    let dx = point.angle_x.cos() - true_x.cos();
    let dy = point.angle_y.cos() - true_y.cos();
    profile.beta_r
        * (profile.lx * profile.ly) as f64
        * fejer_kernel(2.0 * dx, profile.lx)
        * fejer_kernel(2.0 * dy, profile.ly)
}

/// `|a_I^T Theta_R a_I|^2` evaluated element by element, for any phases.
pub fn reflect_gain_direct(profile: &IosProfile, true_x: f64, true_y: f64) -> Result<f64> {
    let a = steering_upa(true_x, true_y, profile.lx, profile.ly)?;
    let amp = profile.beta_r.sqrt();
    let s: Complex64 = a
        .iter()
        .zip(&profile.reflect_phases)
        .map(|(ai, &th)| Complex64::from_polar(amp, th) * ai * ai)
        .sum();
    Ok(s.norm_sqr())
}

/// `|h^T Theta_T a_I|^2 / beta_h` evaluated element by element.
pub fn refract_gain_direct(profile: &IosProfile, device: &CVector, true_x: f64, true_y: f64) -> Result<f64> {
    if device.len() != profile.len() {
        return Err(IsacError::InvalidDimension(format!(
            "device channel has {} entries, surface {}",
            device.len(),
            profile.len()
        )));
    }
    let a = steering_upa(true_x, true_y, profile.lx, profile.ly)?;
    let amp = profile.beta_t.sqrt();
    let s: Complex64 = a
        .iter()
        .zip(device.iter())
        .zip(&profile.refract_phases)
        .map(|((ai, hi), &th)| Complex64::from_polar(amp, th) * ai * hi)
        .sum();
    Ok(s.norm_sqr())
}

/// Refracted gain of an aligned profile, normalized like
/// [`refract_gain_direct`] with a unit-amplitude device channel:
/// `beta_t L_x L_y F_Lx(dcos_x) F_Ly(dcos_y)`.
pub fn refract_gain(profile: &IosProfile, point: BeamPointing, true_x: f64, true_y: f64) -> f64 {
    let dx = point.angle_x.cos() - true_x.cos();
    let dy = point.angle_y.cos() - true_y.cos();
    profile.beta_t
        * (profile.lx * profile.ly) as f64
        * fejer_kernel(dx, profile.lx)
        * fejer_kernel(dy, profile.ly)
}

/// RSU array gains for beams steered at `point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGains {
    /// `|a_R^T f|^2 = p_max F_Mt(dcos_x)`.
    pub tx: f64,
    /// `|v_x^H b_R(angle_x)|^2 = F_Mr(dcos_x)`.
    pub rx_x: f64,
    /// `|v_y^H b_R(angle_y)|^2 = F_Mr(dcos_y)`.
    pub rx_y: f64,
}

pub fn tx_rx_beam_gains(
    point: BeamPointing,
    true_x: f64,
    true_y: f64,
    m_t: usize,
    m_r: usize,
    p_max: f64,
) -> ArrayGains {
    let dx = point.angle_x.cos() - true_x.cos();
    let dy = point.angle_y.cos() - true_y.cos();
    ArrayGains {
        tx: p_max * fejer_kernel(dx, m_t),
        rx_x: fejer_kernel(dx, m_r),
        rx_y: fejer_kernel(dy, m_r),
    }
}

/// Same gains from the explicit beamformers
/// `f = sqrt(p_max / M_t) conj(a_R(point))` and `v = b_R(point) / sqrt(M_r)`.
pub fn tx_rx_beam_gains_direct(
    point: BeamPointing,
    true_x: f64,
    true_y: f64,
    m_t: usize,
    m_r: usize,
    p_max: f64,
) -> Result<ArrayGains> {
    let f = steering_ula(point.angle_x, m_t)?.map(|z| z.conj() * (p_max / m_t as f64).sqrt());
    let a = steering_ula(true_x, m_t)?;
    let vx = steering_ula(point.angle_x, m_r)?.map(|z| z / (m_r as f64).sqrt());
    let vy = steering_ula(point.angle_y, m_r)?.map(|z| z / (m_r as f64).sqrt());
    let bx = steering_ula(true_x, m_r)?;
    let by = steering_ula(true_y, m_r)?;
    Ok(ArrayGains {
        tx: a.dot(&f).norm_sqr(),
        rx_x: vx.dotc(&bx).norm_sqr(),
        rx_y: vy.dotc(&by).norm_sqr(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{device_channel, device_direction, downlink_channel};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn broadside_reflection_is_flat() {
        let p = optimal_reflect_phases(BeamPointing::new(PI / 2.0, PI / 2.0), 4, 3, 0.7);
        assert!(p.iter().all(|&t| (t - 0.7).abs() < 1e-12));
    }

    #[test]
    fn refract_gradients_cancel_for_matched_device() {
        let point = BeamPointing::new(1.1, 2.0);
        let p = optimal_refract_phases(point, point.angle_x.cos(), -point.angle_y.cos(), 5, 4, 1.3);
        assert!(p.iter().all(|&t| (t - 1.3).abs() < 1e-12));
    }

    #[test]
    fn phases_are_wrapped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let point = BeamPointing::new(rng.random_range(0.01..3.13), rng.random_range(0.01..3.13));
            let t0 = rng.random_range(-10.0..10.0);
            for t in optimal_reflect_phases(point, 9, 7, t0)
                .into_iter()
                .chain(optimal_refract_phases(point, 0.3, -0.8, 9, 7, t0))
            {
                assert!((0.0..TAU).contains(&t), "{t}");
            }
        }
        assert_eq!(wrap_phase(-1e-18), 0.0);
    }

    #[test]
    fn aligned_reflection_reaches_full_gain() {
        let point = BeamPointing::new(0.9, 2.2);
        let prof = IosProfile::aligned(point, 0.1, 0.2, 8, 6, 0.35).unwrap();
        let g = passive_beamforming_gain(&prof, point, point.angle_x, point.angle_y);
        assert_relative_eq!(g, 0.35 * 48.0 * 48.0, max_relative = 1e-12);
        let d = reflect_gain_direct(&prof, point.angle_x, point.angle_y).unwrap();
        assert_relative_eq!(d, g, max_relative = 1e-9);
    }

    #[test]
    fn first_fejer_null_kills_reflection() {
        let lx = 16;
        let point = BeamPointing::new(PI / 2.0, PI / 2.0);
        let prof = IosProfile::aligned(point, 0.0, 0.0, lx, 4, 0.5).unwrap();
        // cos(true) = cos(point) - 1/lx, so 2 dcos = 2/lx.
        let true_x = (point.angle_x.cos() - 1.0 / lx as f64).acos();
        let g = passive_beamforming_gain(&prof, point, true_x, point.angle_y);
        assert!(g < 1e-20);
        assert!(reflect_gain_direct(&prof, true_x, point.angle_y).unwrap() < 1e-18);
    }

    #[test]
    fn fejer_gain_matches_quadratic_form_under_mispointing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let point = BeamPointing::new(rng.random_range(0.2..2.9), rng.random_range(0.2..2.9));
            let tx = point.angle_x + rng.random_range(-0.2..0.2);
            let ty = point.angle_y + rng.random_range(-0.2..0.2);
            let prof = IosProfile::aligned(point, 0.2, -0.4, 11, 9, 0.6).unwrap();
            let f = passive_beamforming_gain(&prof, point, tx, ty);
            let d = reflect_gain_direct(&prof, tx, ty).unwrap();
            assert!((f - d).abs() <= 1e-9 * f.max(1e-6), "{f} vs {d}");
        }
    }

    #[test]
    fn refract_gain_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (az, el) = (0.4, 1.1);
        let (pu, ou) = device_direction(az, el);
        let dev = device_channel(az, el, 1.0, 10, 7).unwrap();
        for _ in 0..40 {
            let point = BeamPointing::new(rng.random_range(0.2..2.9), rng.random_range(0.2..2.9));
            let tx = point.angle_x + rng.random_range(-0.2..0.2);
            let ty = point.angle_y + rng.random_range(-0.2..0.2);
            let prof = IosProfile::aligned(point, pu, ou, 10, 7, 0.3).unwrap();
            let f = refract_gain(&prof, point, tx, ty);
            let d = refract_gain_direct(&prof, &dev, tx, ty).unwrap();
            assert!((f - d).abs() <= 1e-9 * f.max(1e-6), "{f} vs {d}");
        }
    }

    #[test]
    fn common_phase_offset_cancels() {
        let point = BeamPointing::new(1.0, 1.9);
        let (tx, ty) = (1.05, 1.87);
        let a = IosProfile::new(
            6,
            5,
            optimal_refract_phases(point, 0.1, 0.2, 6, 5, 0.0),
            optimal_reflect_phases(point, 6, 5, 0.0),
            0.4,
        )
        .unwrap();
        let b = IosProfile::new(
            6,
            5,
            optimal_refract_phases(point, 0.1, 0.2, 6, 5, 2.1),
            optimal_reflect_phases(point, 6, 5, 2.1),
            0.4,
        )
        .unwrap();
        let dev = device_channel(0.3, 0.9, 1.0, 6, 5).unwrap();
        assert_relative_eq!(
            reflect_gain_direct(&a, tx, ty).unwrap(),
            reflect_gain_direct(&b, tx, ty).unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            refract_gain_direct(&a, &dev, tx, ty).unwrap(),
            refract_gain_direct(&b, &dev, tx, ty).unwrap(),
            max_relative = 1e-10
        );
    }

    /// Exhaustive search over 8 phase levels on a 2x2 panel.
    fn best_discrete(gain: impl Fn(&[f64]) -> f64) -> f64 {
        let levels: Vec<f64> = (0..8).map(|k| k as f64 * TAU / 8.0).collect();
        let mut best = 0.0f64;
        for i in 0..8usize.pow(4) {
            let ph = [levels[i % 8], levels[(i / 8) % 8], levels[(i / 64) % 8], levels[i / 512]];
            best = best.max(gain(&ph));
        }
        best
    }

    #[test]
    fn reflect_phases_beat_exhaustive_discrete_search() {
        let point = BeamPointing::new(1.2, 2.4);
        let mk = |ph: &[f64]| IosProfile::new(2, 2, vec![0.0; 4], ph.to_vec(), 1.0).unwrap();
        let best = best_discrete(|ph| reflect_gain_direct(&mk(ph), point.angle_x, point.angle_y).unwrap());
        let designed = reflect_gain_direct(&mk(&optimal_reflect_phases(point, 2, 2, 0.0)), point.angle_x, point.angle_y).unwrap();
        assert_relative_eq!(designed, 16.0, max_relative = 1e-12);
        assert!(designed >= best - 1e-12);
        // Continuous optimum, discrete search within quantization loss.
        assert!(best >= 16.0 * (PI / 8.0).cos().powi(2) - 1e-9);
    }

    #[test]
    fn refract_phases_beat_exhaustive_discrete_search() {
        let point = BeamPointing::new(0.8, 1.7);
        let (az, el) = (0.9, 0.6);
        let (pu, ou) = device_direction(az, el);
        let dev = device_channel(az, el, 1.0, 2, 2).unwrap();
        let mk = |ph: &[f64]| IosProfile::new(2, 2, ph.to_vec(), vec![0.0; 4], 0.0).unwrap();
        let best = best_discrete(|ph| refract_gain_direct(&mk(ph), &dev, point.angle_x, point.angle_y).unwrap());
        let designed = refract_gain_direct(
            &mk(&optimal_refract_phases(point, pu, ou, 2, 2, 0.0)),
            &dev,
            point.angle_x,
            point.angle_y,
        )
        .unwrap();
        assert_relative_eq!(designed, 16.0, max_relative = 1e-12);
        assert!(designed >= best - 1e-12);
    }

    #[test]
    fn aligned_refraction_scales_with_l_and_m_t() {
        // |h^T Theta_T H_dl f|^2 at zero error = beta_t beta_g beta_h p_max M_t L^2.
        let point = BeamPointing::new(1.3, 1.8);
        let (az, el) = (0.2, 0.7);
        let (pu, ou) = device_direction(az, el);
        let (lx, ly, m_t) = (6, 5, 4);
        let (bg, bh, p, beta_r) = (2e-7, 1e-4, 0.1, 0.25);
        let prof = IosProfile::aligned(point, pu, ou, lx, ly, beta_r).unwrap();
        let dl = downlink_channel(point.angle_x, point.angle_y, bg, m_t, lx, ly).unwrap();
        let dev = device_channel(az, el, bh, lx, ly).unwrap();
        let f = steering_ula(point.angle_x, m_t).unwrap().map(|z| z.conj() * (p / m_t as f64).sqrt());
        let theta: CVector = CVector::from_iterator(
            lx * ly,
            prof.refract_phases.iter().map(|&t| Complex64::from_polar(prof.beta_t.sqrt(), t)),
        );
        let at_surface = &dl * &f;
        let y: Complex64 = dev.iter().zip(theta.iter()).zip(at_surface.iter()).map(|((h, t), s)| h * t * s).sum();
        let l = (lx * ly) as f64;
        assert_relative_eq!(
            y.norm_sqr(),
            (1.0 - beta_r) * bg * bh * p * m_t as f64 * l * l,
            max_relative = 1e-10
        );
    }

    #[test]
    fn array_gain_examples() {
        let point = BeamPointing::new(1.0, 2.0);
        let g = tx_rx_beam_gains(point, 1.0, 2.0, 8, 6, 0.1);
        assert_relative_eq!(g.tx, 0.8, max_relative = 1e-12);
        assert_relative_eq!(g.rx_x, 6.0, max_relative = 1e-12);
        assert_relative_eq!(g.rx_y, 6.0, max_relative = 1e-12);

        let true_x = (point.angle_x.cos() - 2.0 / 8.0).acos();
        assert!(tx_rx_beam_gains(point, true_x, 2.0, 8, 6, 0.1).tx < 1e-20);
    }

    #[test]
    fn array_gains_match_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let point = BeamPointing::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            let tx = rng.random_range(0.1..3.0);
            let ty = rng.random_range(0.1..3.0);
            let a = tx_rx_beam_gains(point, tx, ty, 8, 5, 0.2);
            let b = tx_rx_beam_gains_direct(point, tx, ty, 8, 5, 0.2).unwrap();
            for (u, v) in [(a.tx, b.tx), (a.rx_x, b.rx_x), (a.rx_y, b.rx_y)] {
                assert!((u - v).abs() <= 1e-9 * u.max(1e-6), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn equal_power_split_maximizes_aligned_reflection() {
        // Aligned phases: gain = |sum_l sqrt(beta_l)|^2 at zero error.
        let l = 9;
        let total = 4.0;
        let equal = (l as f64 * (total / l as f64).sqrt()).powi(2);
        assert_relative_eq!(equal, l as f64 * total, max_relative = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let w: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            let split: Vec<f64> = w.iter().map(|x| x * total / s).collect();
            // Per-element fractions must stay in [0, 1].
            if split.iter().any(|&b| b > 1.0) {
                continue;
            }
            let g = split.iter().map(|b| b.sqrt()).sum::<f64>().powi(2);
            assert!(g <= equal + 1e-12);
        }
    }

    #[test]
    fn communication_only_profile_refracts_everything() {
        let p = IosProfile::communication_only(BeamPointing::new(1.0, 1.0), 0.0, 0.0, 3, 3).unwrap();
        assert_eq!(p.beta_r, 0.0);
        assert_eq!(p.beta_t, 1.0);
    }

    #[test]
    fn profile_rejects_bad_input() {
        assert!(IosProfile::new(2, 2, vec![0.0; 3], vec![0.0; 4], 0.5).is_err());
        assert!(IosProfile::new(2, 2, vec![0.0; 4], vec![0.0; 4], 1.5).is_err());
    }
}
