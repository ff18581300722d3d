//! Geometric line-of-sight channels between the RSU, the surface and the
//! in-vehicle device.
//!
//! Shapes: the downlink is `L x M_t` (surface elements by transmit antennas),
//! the uplinks are `M_r x L`, and the device channel is a length-`L` vector,
//! so the device sees `h^T Theta H_dl f` and the x-axis receive array sees
//! `v^H H_ul_x Theta H_dl f`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::math::{steering_ula, steering_upa, CVector};

pub type CMatrix = DMatrix<Complex64>;

/// Positions of the RSU and the vehicle plus the surface-to-device direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// Meters.
    pub rsu_position: [f64; 3],
    /// Meters.
    pub vehicle_position: [f64; 3],
    /// Azimuth of the surface-to-device path, radians.
    pub device_azimuth: f64,
    /// Elevation (polar angle from z) of the surface-to-device path, radians, in `(0, pi)`.
    pub device_elevation: f64,
}

/// Angles of the RSU-to-vehicle line of sight relative to the two RSU arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfSight {
    /// Angle to the x-axis array, radians.
    pub angle_x: f64,
    /// Angle to the y-axis array, radians.
    pub angle_y: f64,
    /// Meters.
    pub distance: f64,
}

/// Free-space power gain `beta0 / d^2`.
pub fn path_gain(beta0: f64, distance: f64) -> f64 {
    beta0 / (distance * distance)
}

/// Direction cosines of the RSU-to-vehicle displacement.
///
/// With `psi_x` the azimuth and `psi_z` the polar angle of the displacement,
/// `cos(angle_x) = sin(psi_z) cos(psi_x)` and
/// `cos(angle_y) = sin(psi_z) sin(psi_x)`.
pub fn angles_from_geometry(geom: &Geometry) -> Result<LineOfSight> {
    let d: Vec<f64> = (0..3)
        .map(|i| geom.vehicle_position[i] - geom.rsu_position[i])
        .collect();
    let distance = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(IsacError::DegenerateGeometry(
            "RSU and vehicle positions coincide".into(),
        ));
    }
    let psi_z = (d[2] / distance).clamp(-1.0, 1.0).acos();
    let psi_x = d[1].atan2(d[0]);
    let cos_x = (psi_z.sin() * psi_x.cos()).clamp(-1.0, 1.0);
    let cos_y = (psi_z.sin() * psi_x.sin()).clamp(-1.0, 1.0);
    Ok(LineOfSight {
        angle_x: cos_x.acos(),
        angle_y: cos_y.acos(),
        distance,
    })
}

fn check_gain(name: &str, g: f64) -> Result<()> {
    if g > 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(IsacError::InvalidParameter(format!("{name} must be positive, got {g}")))
    }
}

/// `sqrt(beta_g) a_I(angle_x, angle_y) a_R(angle_x)^T`, shape `L x M_t`.
pub fn downlink_channel(
    angle_x: f64,
    angle_y: f64,
    beta_g: f64,
    m_t: usize,
    lx: usize,
    ly: usize,
) -> Result<CMatrix> {
    check_gain("beta_g", beta_g)?;
    let a_i = steering_upa(angle_x, angle_y, lx, ly)?;
    let a_r = steering_ula(angle_x, m_t)?;
    Ok((a_i * a_r.transpose()).map(|z| z * beta_g.sqrt()))
}

/// Uplinks from the surface to the x-axis and y-axis receive arrays, each
/// `M_r x L`: `sqrt(beta_g) b_R(angle) a_I^T` with the x-axis array seeing
/// `angle_x` and the y-axis array seeing `angle_y`.
pub fn uplink_channels(
    angle_x: f64,
    angle_y: f64,
    beta_g: f64,
    m_r: usize,
    lx: usize,
    ly: usize,
) -> Result<(CMatrix, CMatrix)> {
    check_gain("beta_g", beta_g)?;
    let a_i = steering_upa(angle_x, angle_y, lx, ly)?;
    let b_x = steering_ula(angle_x, m_r)?;
    let b_y = steering_ula(angle_y, m_r)?;
    let s = beta_g.sqrt();
    Ok((
        (b_x * a_i.transpose()).map(|z| z * s),
        (b_y * a_i.transpose()).map(|z| z * s),
    ))
}

/// Direction cosines `(Phi_u, Omega_u)` of the surface-to-device path.
pub fn device_direction(azimuth: f64, elevation: f64) -> (f64, f64) {
    (elevation.sin() * azimuth.cos(), elevation.sin() * azimuth.sin())
}

/// Line-of-sight surface-to-device channel: element `ix * ly + iy` is
/// `sqrt(beta_h) exp(-j pi ix Phi_u) exp(-j pi iy Omega_u)`.
pub fn device_channel(
    azimuth: f64,
    elevation: f64,
    beta_h: f64,
    lx: usize,
    ly: usize,
) -> Result<CVector> {
    check_gain("beta_h", beta_h)?;
    if lx == 0 || ly == 0 {
        return Err(IsacError::InvalidDimension(format!(
            "surface must have nonzero size, got {lx}x{ly}"
        )));
    }
    let (phi_u, omega_u) = device_direction(azimuth, elevation);
    let s = beta_h.sqrt();
    let mut out = CVector::zeros(lx * ly);
    for ix in 0..lx {
        for iy in 0..ly {
            let phase = -std::f64::consts::PI * (ix as f64 * phi_u + iy as f64 * omega_u);
            out[ix * ly + iy] = Complex64::from_polar(s, phase);
        }
    }
    Ok(out)
}

/// All channels of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub downlink: CMatrix,
    pub uplink_x: CMatrix,
    pub uplink_y: CMatrix,
    pub device: CVector,
    pub beta_g: f64,
    pub distance: f64,
}

impl ChannelSet {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        geom: &Geometry,
        beta0: f64,
        beta_h: f64,
        m_t: usize,
        m_r: usize,
        lx: usize,
        ly: usize,
    ) -> Result<Self> {
        check_gain("beta0", beta0)?;
        let los = angles_from_geometry(geom)?;
        let beta_g = path_gain(beta0, los.distance);
        let downlink = downlink_channel(los.angle_x, los.angle_y, beta_g, m_t, lx, ly)?;
        let (uplink_x, uplink_y) = uplink_channels(los.angle_x, los.angle_y, beta_g, m_r, lx, ly)?;
        let device = device_channel(geom.device_azimuth, geom.device_elevation, beta_h, lx, ly)?;
        Ok(Self {
            downlink,
            uplink_x,
            uplink_y,
            device,
            beta_g,
            distance: los.distance,
        })
    }
}
