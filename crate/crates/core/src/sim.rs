//! Slot-by-slot trajectory simulation of the tracking and beamforming loop,
//! and the sweeps built on it.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{IsacError, Result};
use crate::ios::{passive_beamforming_gain, reflect_gain_direct, BeamPointing, IosProfile};
use crate::math::clamp_angle;
use crate::mc::stream_rng;
use crate::optimizer::{optimize_slot, SearchSpec};
use crate::rate::{
    combine, echo_snr_closed, echo_snr_mc, realized_comm_snr, realized_echo_snr, RateModel, Sampling,
    SlotContext,
};
use crate::tracking::{
    compute_a, kalman_predict, kalman_update, state_evolve, KalmanBelief, MeasurementVariance, VehicleState,
};

/// Beamforming strategy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Optimized sensing allocation with aligned reflection phases.
    Proposed,
    /// Same allocation, reflection phases drawn at random.
    Refraction,
    /// No sensing: beams follow the open-loop prediction.
    Prediction,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Refraction, Scheme::Prediction];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Refraction => "refraction",
            Scheme::Prediction => "prediction",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| IsacError::InvalidParameter(format!("unknown scheme {s:?}")))
    }
}

/// How the true vehicle state evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthModel {
    /// Exact line of sight to a vehicle driving along +x.
    #[default]
    Geometry,
    /// The tracker's own process model with its process noise.
    ProcessModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub truth: TruthModel,
    pub search: SearchSpec,
}

/// Record of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub slot: usize,
    /// Vehicle x coordinate, meters.
    pub x_m: f64,
    pub eta: f64,
    pub beta_r: f64,
    /// Realized echo SNR, linear. Zero when nothing is reflected.
    pub snr_echo: f64,
    pub rate_sc: f64,
    pub rate_c: f64,
    pub rate_avg: f64,
    /// Posterior variance of the x-axis angle.
    pub sigma2_tracked_x: f64,
    /// Posterior variance of the y-axis angle.
    pub sigma2_tracked_y: f64,
    pub truth: VehicleState,
    pub tracked: VehicleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub scheme: Scheme,
    pub slots: Vec<SlotOutcome>,
    pub mean_rate: f64,
}

// Independent random streams of one trajectory.
const STREAM_INIT: u64 = 1 << 40;
const STREAM_MEASURE: u64 = STREAM_INIT + 1;
const STREAM_PHASES: u64 = STREAM_INIT + 2;
const STREAM_TRUTH: u64 = STREAM_INIT + 3;

fn normal4(rng: &mut ChaCha8Rng) -> Vector4<f64> {
    Vector4::from_fn(|_, _| StandardNormal.sample(rng))
}

fn process_diag(cfg: &SystemConfig) -> Vector4<f64> {
    Vector4::new(cfg.sigma2_omega_x, cfg.sigma2_omega_y, cfg.sigma2_omega_d, cfg.sigma2_omega_v)
}

fn true_state_at(cfg: &SystemConfig, t: f64) -> Result<VehicleState> {
    let los = cfg.line_of_sight(t)?;
    Ok(VehicleState::new(los.angle_x, los.angle_y, los.distance, cfg.speed_mps))
}

pub fn run_trajectory(cfg: &SystemConfig, scheme: Scheme, seed: u64) -> Result<TrajectoryResult> {
    run_trajectory_with(cfg, scheme, seed, &SimOptions::default())
}

pub fn run_trajectory_with(
    cfg: &SystemConfig,
    scheme: Scheme,
    seed: u64,
    opts: &SimOptions,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    let q = process_diag(cfg);
    let q_sd = q.map(f64::sqrt);
    let dt = cfg.slot_duration_s;

    let mut init_rng = stream_rng(seed, STREAM_INIT);
    let mut meas_rng = stream_rng(seed, STREAM_MEASURE);
    let mut phase_rng = stream_rng(seed, STREAM_PHASES);
    let mut truth_rng = stream_rng(seed, STREAM_TRUTH);

    let mut truth = true_state_at(cfg, 0.0)?;
    let w0 = normal4(&mut init_rng).component_mul(&q_sd);
    let mut start = VehicleState::from_vector(&(truth.to_vector() + w0));
    start.angle_x = clamp_angle(start.angle_x);
    start.angle_y = clamp_angle(start.angle_y);
    start.distance = start.distance.max(crate::tracking::MIN_DISTANCE);
    let mut belief = KalmanBelief::new(start, Matrix4::from_diagonal(&q), q)?;

    let (phi_u, omega_u) = cfg.device_cosines();
    let (lx, ly) = (cfg.l_x, cfg.l_y);
    let mut slots = Vec::with_capacity(cfg.num_slots);

    for n in 1..=cfg.num_slots {
        let t = n as f64 * dt;
        truth = match opts.truth {
            TruthModel::Geometry => true_state_at(cfg, t)?,
            TruthModel::ProcessModel => {
                let w = normal4(&mut truth_rng).component_mul(&q_sd);
                state_evolve(truth, dt, Some(w))?
            }
        };
        let x_m = cfg.vehicle_position_at(t)[0];
        belief = kalman_predict(&belief, dt)?;
        let predicted = belief.predicted;
        let pointing = BeamPointing::new(predicted.angle_x, predicted.angle_y);

        let (eta, beta_r) = match scheme {
            Scheme::Prediction => (0.0, 0.0),
            Scheme::Proposed | Scheme::Refraction => {
                let ctx = SlotContext {
                    cfg,
                    true_state: predicted,
                    pointing,
                    eta: 0.0,
                    beta_r: 0.0,
                    angle_variance: (cfg.sigma2_omega_x, cfg.sigma2_omega_y),
                };
                let d = optimize_slot(&RateModel::from_context(&ctx)?, &opts.search)?;
                (d.eta_star, d.beta_r_star)
            }
        };
        let eb = eta * beta_r;
        let beta_g = cfg.path_gain(truth.distance);

        // Sensing: angle accuracy follows the echo SNR.
        let z_noise = normal4(&mut meas_rng);
        let mut snr_echo = 0.0;
        let mut variances = [MeasurementVariance::NoMeasurement; 4];
        if eb > 0.0 {
            let (mut a_x, mut a_y) = compute_a(cfg, beta_g, truth.angle_x, truth.angle_y)?;
            let aligned = IosProfile::aligned(pointing, phi_u, omega_u, lx, ly, beta_r)?;
            let aligned_gain = passive_beamforming_gain(&aligned, pointing, truth.angle_x, truth.angle_y);
            snr_echo = realized_echo_snr(cfg, beta_g, eta, aligned_gain, pointing, truth.angle_x);
            if scheme == Scheme::Refraction {
                let random: Vec<f64> = (0..lx * ly).map(|_| phase_rng.random_range(0.0..TAU)).collect();
                let prof = IosProfile::new(lx, ly, aligned.refract_phases.clone(), random, beta_r)?;
                let g = reflect_gain_direct(&prof, truth.angle_x, truth.angle_y)?;
                let direct = realized_echo_snr(cfg, beta_g, eta, g, pointing, truth.angle_x);
                let closed = echo_snr_closed(&SlotContext {
                    cfg,
                    true_state: truth,
                    pointing,
                    eta,
                    beta_r,
                    angle_variance: (cfg.sigma2_omega_x, cfg.sigma2_omega_y),
                })?;
                let scale = if direct > 0.0 { closed / direct } else { f64::INFINITY };
                a_x *= scale;
                a_y *= scale;
                snr_echo = direct;
            }
            variances = [
                MeasurementVariance::scaled(a_x, eb),
                MeasurementVariance::scaled(a_y, eb),
                MeasurementVariance::scaled(cfg.a_d, eb),
                MeasurementVariance::scaled(cfg.a_v, eb),
            ];
            for v in variances.iter_mut() {
                if let MeasurementVariance::Finite(x) = v {
                    if !x.is_finite() {
                        *v = MeasurementVariance::NoMeasurement;
                    }
                }
            }
        }
        let sd = Vector4::from_fn(|i, _| variances[i].value().map_or(0.0, f64::sqrt));
        let mut z = VehicleState::from_vector(&(truth.to_vector() + z_noise.component_mul(&sd)));
        z.angle_x = clamp_angle(z.angle_x);
        z.angle_y = clamp_angle(z.angle_y);
        belief = kalman_update(&belief, &z, variances)?;

        let tracked = belief.tracked;
        let sc = realized_comm_snr(cfg, beta_g, 1.0 - beta_r, pointing, truth.angle_x, truth.angle_y);
        let c = realized_comm_snr(
            cfg,
            beta_g,
            1.0,
            BeamPointing::new(tracked.angle_x, tracked.angle_y),
            truth.angle_x,
            truth.angle_y,
        );
        let rate_sc = sc.ln_1p() / std::f64::consts::LN_2;
        let rate_c = c.ln_1p() / std::f64::consts::LN_2;
        slots.push(SlotOutcome {
            slot: n - 1,
            x_m,
            eta,
            beta_r,
            snr_echo,
            rate_sc,
            rate_c,
            rate_avg: combine(eta, rate_sc, rate_c),
            sigma2_tracked_x: belief.mse[(0, 0)],
            sigma2_tracked_y: belief.mse[(1, 1)],
            truth,
            tracked,
        });
    }
    let mean_rate = slots.iter().map(|s| s.rate_avg).sum::<f64>() / slots.len() as f64;
    Ok(TrajectoryResult { scheme, slots, mean_rate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRow {
    pub p_max_w: f64,
    pub scheme: Scheme,
    pub mean_rate: f64,
}

/// Mean trajectory rate for every `(power, scheme)` pair, power-major.
pub fn sweep_power(cfg: &SystemConfig, p_values: &[f64], schemes: &[Scheme], seed: u64) -> Result<Vec<PowerRow>> {
    if p_values.iter().any(|p| !(*p > 0.0)) {
        return Err(IsacError::InvalidParameter("powers must be positive".into()));
    }
    if p_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IsacError::InvalidParameter("powers must be ascending".into()));
    }
    let jobs: Vec<(f64, Scheme)> = p_values
        .iter()
        .flat_map(|&p| schemes.iter().map(move |&s| (p, s)))
        .collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let c = SystemConfig { p_max_w: p, ..cfg.clone() };
            run_trajectory(&c, s, seed).map(|r| PowerRow { p_max_w: p, scheme: s, mean_rate: r.mean_rate })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrRow {
    pub lx: usize,
    pub snr_mc: f64,
    pub snr_closed: f64,
    pub rel_err: f64,
    pub stderr: f64,
}

/// Monte Carlo against closed-form echo SNR as the surface grows along x.
///
/// Beams point broadside on both axes at the initial distance, with all of
/// the slot and all surface power spent on sensing. Angle errors use the
/// configured process variances.
pub fn validate_snr_convergence(
    cfg: &SystemConfig,
    lx_values: &[usize],
    trials: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<Vec<SnrRow>> {
    if trials < 10_000 {
        return Err(IsacError::InvalidParameter(format!(
            "convergence check needs at least 10^4 trials, got {trials}"
        )));
    }
    let distance = cfg.line_of_sight(0.0)?.distance;
    lx_values
        .iter()
        .map(|&lx| {
            let c = SystemConfig { l_x: lx, ..cfg.clone() };
            let ctx = SlotContext {
                cfg: &c,
                true_state: VehicleState::new(PI / 2.0, PI / 2.0, distance, cfg.speed_mps),
                pointing: BeamPointing::new(PI / 2.0, PI / 2.0),
                eta: 1.0,
                beta_r: 1.0,
                angle_variance: (cfg.sigma2_omega_x, cfg.sigma2_omega_y),
            };
            let (snr_mc, stderr) = echo_snr_mc(&ctx, trials, seed, sampling)?;
            let snr_closed = echo_snr_closed(&ctx)?;
            Ok(SnrRow {
                lx,
                snr_mc,
                snr_closed,
                rel_err: (snr_mc - snr_closed).abs() / snr_closed,
                stderr,
            })
        })
        .collect()
}
