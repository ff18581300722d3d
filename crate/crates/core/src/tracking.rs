//! Vehicle kinematics, the extended Kalman tracker and the variance algebra
//! linking sensing allocation to angle accuracy.

use nalgebra::{Matrix4, Vector4};

use crate::config::SystemConfig;
use crate::error::{IsacError, Result};
use crate::math::{clamp_angle, h_or_peak};

/// Distance from `0` or `pi` below which `cot` of the y-axis angle is refused.
pub const COT_SINGULAR_TOL: f64 = 1e-6;

/// Floor applied to propagated distances. An open-loop prediction can run
/// the range through zero; the model is meaningless there anyway.
pub const MIN_DISTANCE: f64 = 1.0;

/// Kinematic state: the two line-of-sight angles, range and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub angle_x: f64,
    pub angle_y: f64,
    /// Meters.
    pub distance: f64,
    /// Meters per second.
    pub speed: f64,
}

impl VehicleState {
    pub fn new(angle_x: f64, angle_y: f64, distance: f64, speed: f64) -> Self {
        Self { angle_x, angle_y, distance, speed }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.angle_x, self.angle_y, self.distance, self.speed)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    fn check(&self) -> Result<()> {
        let pi = std::f64::consts::PI;
        for a in [self.angle_x, self.angle_y] {
            if !(a > 0.0 && a < pi) {
                return Err(IsacError::SingularAngle(a));
            }
        }
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(IsacError::DegenerateGeometry(format!(
                "distance must be positive, got {}",
                self.distance
            )));
        }
        let s = self.angle_y.sin();
        if s < COT_SINGULAR_TOL {
            return Err(IsacError::SingularAngle(self.angle_y));
        }
        Ok(())
    }
}

/// One step of the process model:
///
/// ```text
/// x' = x + v dT cos(x) / d
/// y' = y + v dT cot(y) / d
/// d' = d - v dT sin(x)
/// v' = v
/// ```
///
/// plus the optional additive noise, with angles clamped back into `(0, pi)`
/// and the distance floored at [`MIN_DISTANCE`].
pub fn state_evolve(state: VehicleState, dt: f64, noise: Option<Vector4<f64>>) -> Result<VehicleState> {
    state.check()?;
    let VehicleState { angle_x: x, angle_y: y, distance: d, speed: v } = state;
    let step = v * dt;
    let w = noise.unwrap_or_else(Vector4::zeros);
    let cot = y.cos() / y.sin();
    let next_x = x + step * x.cos() / d + w[0];
    let next_y = y + step * cot / d + w[1];
    let next_d = d - step * x.sin() + w[2];
    if !next_d.is_finite() {
        return Err(IsacError::Numerical(format!("distance is not finite ({next_d})")));
    }
    Ok(VehicleState::new(
        clamp_angle(next_x),
        clamp_angle(next_y),
        next_d.max(MIN_DISTANCE),
        v + w[3],
    ))
}

/// Partial derivatives of [`state_evolve`] (without clamping) with respect to
/// `(angle_x, angle_y, distance, speed)`.
pub fn evolution_jacobian(state: VehicleState, dt: f64) -> Result<Matrix4<f64>> {
    state.check()?;
    let VehicleState { angle_x: x, angle_y: y, distance: d, speed: v } = state;
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();
    let cot = cy / sy;
    let step = v * dt;
    #[rustfmt::skip]
    let g = Matrix4::new(
        1.0 - step * sx / d, 0.0,                         -step * cx / (d * d),  dt * cx / d,
        0.0,                 1.0 - step / (d * sy * sy),  -step * cot / (d * d), dt * cot / d,
        -step * cx,          0.0,                         1.0,                   -dt * sx,
        0.0,                 0.0,                         0.0,                   1.0,
    );
    Ok(g)
}

/// Variance of one measured component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementVariance {
    Finite(f64),
    /// The component was not measured in this slot.
    NoMeasurement,
}

impl MeasurementVariance {
    /// Variance `a / (eta beta_r)`, or no measurement when the product is zero.
    pub fn scaled(a: f64, eta_beta: f64) -> Self {
        if eta_beta > 0.0 {
            Self::Finite(a / eta_beta)
        } else {
            Self::NoMeasurement
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::NoMeasurement => None,
        }
    }
}

/// Tracker state carried from slot to slot.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanBelief {
    /// One-step prediction made at the start of the current slot.
    pub predicted: VehicleState,
    /// Estimate after the latest update.
    pub tracked: VehicleState,
    /// Error covariance of `tracked` after an update, of `predicted` after a prediction.
    pub mse: Matrix4<f64>,
    /// Diagonal process-noise covariance.
    pub q_process: Matrix4<f64>,
    /// Measurement variances used by the latest update.
    pub q_measure: [MeasurementVariance; 4],
}

impl KalmanBelief {
    pub fn new(initial: VehicleState, mse: Matrix4<f64>, q_process_diag: Vector4<f64>) -> Result<Self> {
        if q_process_diag.iter().any(|q| !(*q >= 0.0)) {
            return Err(IsacError::InvalidParameter(
                "process variances must be nonnegative".into(),
            ));
        }
        Ok(Self {
            predicted: initial,
            tracked: initial,
            mse: symmetrize(&mse),
            q_process: Matrix4::from_diagonal(&q_process_diag),
            q_measure: [MeasurementVariance::NoMeasurement; 4],
        })
    }
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Prediction step: propagate the tracked state through the noiseless
/// process model and the covariance through its Jacobian.
pub fn kalman_predict(belief: &KalmanBelief, dt: f64) -> Result<KalmanBelief> {
    let g = evolution_jacobian(belief.tracked, dt)?;
    let predicted = state_evolve(belief.tracked, dt, None)?;
    let mse = symmetrize(&(g * belief.mse * g.transpose() + belief.q_process));
    Ok(KalmanBelief {
        predicted,
        tracked: predicted,
        mse,
        q_process: belief.q_process,
        q_measure: belief.q_measure,
    })
}

/// Update step with measurement `z` of the full state.
///
/// Components marked [`MeasurementVariance::NoMeasurement`] are left out of
/// the innovation. With every component measured this is the usual
/// `K = M (Q_z + M)^-1`.
pub fn kalman_update(
    belief: &KalmanBelief,
    z: &VehicleState,
    variances: [MeasurementVariance; 4],
) -> Result<KalmanBelief> {
    let observed: Vec<(usize, f64)> = variances
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.value().map(|r| (i, r)))
        .collect();
    if let Some((_, r)) = observed.iter().find(|(_, r)| !(*r >= 0.0) || !r.is_finite()) {
        return Err(IsacError::InvalidParameter(format!(
            "measurement variance must be finite and nonnegative, got {r}"
        )));
    }
    let mut out = belief.clone();
    out.q_measure = variances;
    if observed.is_empty() {
        return Ok(out);
    }
    let m = observed.len();
    let mut h = nalgebra::DMatrix::<f64>::zeros(m, 4);
    let mut r = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut innov = nalgebra::DVector::<f64>::zeros(m);
    let x = belief.predicted.to_vector();
    let zv = z.to_vector();
    for (row, (i, var)) in observed.iter().enumerate() {
        h[(row, *i)] = 1.0;
        r[(row, row)] = *var;
        innov[row] = zv[*i] - x[*i];
    }
    let p = nalgebra::DMatrix::<f64>::from_iterator(4, 4, belief.mse.iter().copied());
    let s = &h * &p * h.transpose() + &r;
    let s_inv = s.clone().try_inverse().ok_or_else(|| {
        IsacError::Numerical("innovation covariance is singular".into())
    })?;
    let k = &p * h.transpose() * s_inv;
    let x_new = nalgebra::DVector::from_iterator(4, x.iter().copied()) + &k * innov;
    // Joseph form keeps the covariance positive semidefinite.
    let ikh = nalgebra::DMatrix::<f64>::identity(4, 4) - &k * &h;
    let p_new = &ikh * &p * ikh.transpose() + &k * &r * k.transpose();
    let p_new = Matrix4::from_iterator(p_new.iter().copied());
    out.tracked = VehicleState::new(
        clamp_angle(x_new[0]),
        clamp_angle(x_new[1]),
        x_new[2],
        x_new[3],
    );
    out.mse = symmetrize(&p_new);
    Ok(out)
}

/// Measurement-variance scale constants and the slot allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementVarianceInputs {
    pub a_x: f64,
    pub a_y: f64,
    pub eta: f64,
    pub beta_r: f64,
}

/// Angle measurement variances `A / (eta beta_r)` for both axes.
pub fn measurement_variances(
    inputs: MeasurementVarianceInputs,
) -> Result<(MeasurementVariance, MeasurementVariance)> {
    let MeasurementVarianceInputs { a_x, a_y, eta, beta_r } = inputs;
    if !(a_x > 0.0) || !(a_y > 0.0) {
        return Err(IsacError::InvalidParameter(format!(
            "variance scales must be positive, got {a_x}, {a_y}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&beta_r) {
        return Err(IsacError::InvalidParameter(format!(
            "eta and beta_r must lie in [0, 1], got {eta}, {beta_r}"
        )));
    }
    let eb = eta * beta_r;
    Ok((MeasurementVariance::scaled(a_x, eb), MeasurementVariance::scaled(a_y, eb)))
}

/// Angle variance scales `(A_x, A_y)`: the measurement variances reached with
/// the whole slot and all surface power spent on sensing.
///
/// `A_x = dt s_s s_R / (dT P L M_t M_r beta_g^2 h(x, w_x) h(y, w_y) sin^2 x)`
/// and `A_y` uses `sin^2 y`, where `w_*` are the process variances.
pub fn compute_a(cfg: &SystemConfig, beta_g: f64, angle_x: f64, angle_y: f64) -> Result<(f64, f64)> {
    let hx = h_or_peak(angle_x, cfg.sigma2_omega_x, cfg.series_order, cfg.l_x as f64)?;
    let hy = h_or_peak(angle_y, cfg.sigma2_omega_y, cfg.series_order, cfg.l_y as f64)?;
    if !(beta_g > 0.0) {
        return Err(IsacError::InvalidParameter(format!("beta_g must be positive, got {beta_g}")));
    }
    let num = cfg.symbol_duration_s * cfg.sigma2_s_w * cfg.sigma2_r;
    let den = cfg.slot_duration_s
        * cfg.p_max_w
        * beta_g
        * beta_g
        * cfg.surface_elements() as f64
        * cfg.m_t as f64
        * cfg.m_r as f64
        * hx
        * hy;
    let base = num / den;
    Ok((base / angle_x.sin().powi(2), base / angle_y.sin().powi(2)))
}

/// Tracked-angle variance after one update:
/// `prior A / (prior eta beta_r + A)`.
pub fn tracked_variance(prior: f64, a: f64, eta_beta: f64) -> f64 {
    if prior == 0.0 {
        return 0.0;
    }
    prior * a / (prior * eta_beta + a)
}
