//! System parameters and scenario geometry.

use crate::channel::{angles_from_geometry, path_gain, Geometry, LineOfSight};
use crate::error::{IsacError, Result};

/// Every scalar of the reference scenario plus the road geometry.
///
/// Powers are watts, variances are in the unit of the quantity squared and
/// gains are linear. [`SystemConfig::default`] is the reference scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Total frame duration `T`, seconds.
    pub total_time_s: f64,
    /// Number of slots `N`.
    pub num_slots: usize,
    pub m_t: usize,
    pub m_r: usize,
    pub l_x: usize,
    pub l_y: usize,
    /// Angle-estimation variance parameter.
    pub sigma2_r: f64,
    pub p_max_w: f64,
    /// Reference path gain at 1 m, linear.
    pub beta0: f64,
    /// Sensing receiver noise power, watts.
    pub sigma2_s_w: f64,
    /// Device receiver noise power, watts.
    pub sigma2_c_w: f64,
    /// Process variance of the x-axis angle, rad^2 per slot.
    pub sigma2_omega_x: f64,
    /// Process variance of the y-axis angle, rad^2 per slot.
    pub sigma2_omega_y: f64,
    /// Process variance of the distance, m^2 per slot.
    pub sigma2_omega_d: f64,
    /// Process variance of the speed, (m/s)^2 per slot.
    pub sigma2_omega_v: f64,
    /// Symbol duration `dt`, seconds.
    pub symbol_duration_s: f64,
    /// Slot duration `dT`, seconds.
    pub slot_duration_s: f64,
    pub carrier_hz: f64,
    pub rsu_position: [f64; 3],
    pub vehicle_position: [f64; 3],
    /// Speed along +x, m/s.
    pub speed_mps: f64,
    /// Surface-to-device path gain, linear.
    pub beta_h: f64,
    pub device_azimuth: f64,
    pub device_elevation: f64,
    /// Distance measurement variance at full sensing allocation, m^2.
    pub a_d: f64,
    /// Speed measurement variance at full sensing allocation, (m/s)^2.
    pub a_v: f64,
    /// Truncation order of the angle-spectrum series.
    pub series_order: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            total_time_s: 10.0,
            num_slots: 500,
            m_t: 8,
            m_r: 8,
            l_x: 80,
            l_y: 80,
            sigma2_r: 1e-10,
            p_max_w: 0.1,
            beta0: db_to_linear(-30.0),
            sigma2_s_w: dbm_to_watts(-70.0),
            sigma2_c_w: dbm_to_watts(-70.0),
            sigma2_omega_x: 0.1,
            sigma2_omega_y: 0.1,
            sigma2_omega_d: 0.25,
            sigma2_omega_v: 0.01,
            symbol_duration_s: 1e-7,
            slot_duration_s: 0.02,
            carrier_hz: 30e9,
            rsu_position: [0.0, 0.0, 20.0],
            vehicle_position: [-100.0, 20.0, 0.0],
            speed_mps: 20.0,
            beta_h: db_to_linear(-40.0),
            device_azimuth: 30f64.to_radians(),
            device_elevation: 60f64.to_radians(),
            a_d: 1.0,
            a_v: 0.25,
            series_order: crate::math::DEFAULT_SERIES_ORDER,
            seed: 0,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(IsacError::Config(format!("{name} must be positive, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(IsacError::Config(format!("{name} must be nonnegative, got {x}")))
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_slots", self.num_slots),
            ("m_t", self.m_t),
            ("m_r", self.m_r),
            ("l_x", self.l_x),
            ("l_y", self.l_y),
            ("series_order", self.series_order),
        ] {
            if v == 0 {
                return Err(IsacError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("total_time_s", self.total_time_s),
            ("sigma2_r", self.sigma2_r),
            ("p_max_w", self.p_max_w),
            ("beta0", self.beta0),
            ("sigma2_s_w", self.sigma2_s_w),
            ("sigma2_c_w", self.sigma2_c_w),
            ("symbol_duration_s", self.symbol_duration_s),
            ("slot_duration_s", self.slot_duration_s),
            ("carrier_hz", self.carrier_hz),
            ("beta_h", self.beta_h),
            ("a_d", self.a_d),
            ("a_v", self.a_v),
        ] {
            positive(name, v)?;
        }
        // Zero process noise is allowed: it switches the tracker to a
        // perfect-prediction regime.
        for (name, v) in [
            ("sigma2_omega_x", self.sigma2_omega_x),
            ("sigma2_omega_y", self.sigma2_omega_y),
            ("sigma2_omega_d", self.sigma2_omega_d),
            ("sigma2_omega_v", self.sigma2_omega_v),
            ("speed_mps", self.speed_mps),
        ] {
            nonnegative(name, v)?;
        }
        let expected = self.num_slots as f64 * self.slot_duration_s;
        if (expected - self.total_time_s).abs() > 1e-9 * self.total_time_s.max(1.0) {
            return Err(IsacError::Config(format!(
                "num_slots * slot_duration_s = {expected} but total_time_s = {}",
                self.total_time_s
            )));
        }
        if self.symbol_duration_s > self.slot_duration_s {
            return Err(IsacError::Config("symbol longer than a slot".into()));
        }
        if !(self.device_elevation > 0.0 && self.device_elevation < std::f64::consts::PI) {
            return Err(IsacError::Config(format!(
                "device_elevation must lie in (0, pi), got {}",
                self.device_elevation
            )));
        }
        let l = self.line_of_sight(0.0).map_err(|e| IsacError::Config(e.to_string()))?;
        let m = crate::math::ANGLE_MARGIN;
        let pi = std::f64::consts::PI;
        if l.angle_x <= m || l.angle_x >= pi - m || l.angle_y <= m || l.angle_y >= pi - m {
            return Err(IsacError::Config(
                "initial geometry puts the vehicle on an array axis".into(),
            ));
        }
        Ok(())
    }

    pub fn surface_elements(&self) -> usize {
        self.l_x * self.l_y
    }

    /// Vehicle position `t` seconds after the start.
    pub fn vehicle_position_at(&self, t: f64) -> [f64; 3] {
        let p = self.vehicle_position;
        [p[0] + self.speed_mps * t, p[1], p[2]]
    }

    pub fn geometry_at(&self, t: f64) -> Geometry {
        Geometry {
            rsu_position: self.rsu_position,
            vehicle_position: self.vehicle_position_at(t),
            device_azimuth: self.device_azimuth,
            device_elevation: self.device_elevation,
        }
    }

    pub fn line_of_sight(&self, t: f64) -> Result<LineOfSight> {
        angles_from_geometry(&self.geometry_at(t))
    }

    pub fn path_gain(&self, distance: f64) -> f64 {
        path_gain(self.beta0, distance)
    }

    /// Direction cosines of the surface-to-device path.
    pub fn device_cosines(&self) -> (f64, f64) {
        crate::channel::device_direction(self.device_azimuth, self.device_elevation)
    }
}
