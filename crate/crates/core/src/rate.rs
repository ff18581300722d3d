//! Echo SNR and achievable rates: Monte Carlo estimators over the angle
//! error and the closed forms that approximate them.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SystemConfig;
use crate::error::{IsacError, Result};
use crate::ios::BeamPointing;
use crate::math::{fejer_kernel, h_or_peak};
use crate::mc::{mean_and_stderr, pairwise_sum, stream_rng, CHUNK};
use crate::tracking::{compute_a, tracked_variance, VehicleState};

/// Inputs of one slot's SNR and rate evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub cfg: &'a SystemConfig,
    /// Only the distance is used: it fixes the path gain.
    pub true_state: VehicleState,
    pub pointing: BeamPointing,
    pub eta: f64,
    pub beta_r: f64,
    /// Prior angle variances `(x, y)`, rad^2.
    pub angle_variance: (f64, f64),
}

impl SlotContext<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) || !(0.0..=1.0).contains(&self.beta_r) {
            return Err(IsacError::InvalidParameter(format!(
                "eta and beta_r must lie in [0, 1], got {}, {}",
                self.eta, self.beta_r
            )));
        }
        let (vx, vy) = self.angle_variance;
        if !(vx >= 0.0 && vy >= 0.0) {
            return Err(IsacError::InvalidParameter(format!(
                "angle variances must be nonnegative, got {vx}, {vy}"
            )));
        }
        if !(self.true_state.distance > 0.0) {
            return Err(IsacError::DegenerateGeometry("nonpositive distance".into()));
        }
        Ok(())
    }

    pub fn beta_g(&self) -> f64 {
        self.cfg.path_gain(self.true_state.distance)
    }

    /// Averaged surface gain per axis for the echo, `E[F_L(2 dcos)]`.
    fn echo_spectrum(&self, angle: f64, variance: f64, l: usize) -> Result<f64> {
        h_or_peak(angle, variance, self.cfg.series_order, l as f64)
    }

    /// Half the averaged surface gain per axis for the device link, `E[F_L(dcos)] / 2`.
    fn comm_spectrum(&self, angle: f64, variance: f64, l: usize) -> Result<f64> {
        h_or_peak(angle, variance, self.cfg.series_order, 0.5 * l as f64)
    }

    /// `beta_r eta L dT P beta_g^2 / (dt s_s)`: echo SNR per unit array gain.
    fn echo_scale(&self) -> f64 {
        let c = self.cfg;
        let bg = self.beta_g();
        self.beta_r * self.eta * c.surface_elements() as f64 * c.slot_duration_s * c.p_max_w * bg * bg
            / (c.symbol_duration_s * c.sigma2_s_w)
    }

    /// `P beta_g beta_h / s_c`: device SNR per unit array gain.
    fn comm_scale(&self) -> f64 {
        let c = self.cfg;
        c.p_max_w * self.beta_g() * c.beta_h / c.sigma2_c_w
    }
}

/// Per-slot rates, bits/s/Hz, and the echo SNR (linear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub rate_sc: f64,
    pub rate_c: f64,
    pub rate_avg: f64,
    pub snr_echo: f64,
}

/// How the Monte Carlo estimators draw angle errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Independent Gaussian draws; the standard error comes from the sample spread.
    Plain,
    /// Per-axis stratified draws through the inverse normal CDF.
    ///
    /// The echo gain factors into an x-axis and a y-axis term, so each axis
    /// expectation is estimated separately with one sample per stratum. The
    /// standard error comes from independent replicates.
    Stratified { replicates: usize },
}

/// Cosine-space pointing error for a true angle `pointing + w`.
fn cos_error(pointing: f64, w: f64) -> f64 {
    pointing.cos() - (pointing + w).cos()
}

fn echo_gain_x(ctx: &SlotContext, w: f64) -> f64 {
    let d = cos_error(ctx.pointing.angle_x, w);
    fejer_kernel(2.0 * d, ctx.cfg.l_x) * fejer_kernel(d, ctx.cfg.m_t) * fejer_kernel(d, ctx.cfg.m_r)
}

fn echo_gain_y(ctx: &SlotContext, w: f64) -> f64 {
    fejer_kernel(2.0 * cos_error(ctx.pointing.angle_y, w), ctx.cfg.l_y)
}

/// Mean and standard error of `f(w_x, w_y)` over independent Gaussian angle
/// errors, evaluated in fixed-size chunks with one RNG stream each.
fn plain_mc<F>(trials: usize, seed: u64, sd: (f64, f64), f: F) -> (f64, f64)
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n)
                .map(|_| {
                    let zx: f64 = StandardNormal.sample(&mut rng);
                    let zy: f64 = StandardNormal.sample(&mut rng);
                    f(zx * sd.0, zy * sd.1)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    mean_and_stderr(&values)
}

/// Stratified estimate of `E[g(w)]` for `w ~ N(0, sd^2)` with `n` strata.
fn stratified_axis<R: Rng>(n: usize, sd: f64, rng: &mut R, g: impl Fn(f64) -> f64) -> f64 {
    let normal = StdNormal::new(0.0, 1.0).expect("unit normal");
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let u = ((i as f64 + rng.random::<f64>()) / n as f64).max(f64::MIN_POSITIVE);
            g(normal.inverse_cdf(u) * sd)
        })
        .collect();
    pairwise_sum(&vals) / n as f64
}

/// Monte Carlo echo SNR: the true angles are the pointing angles plus
/// Gaussian errors with the context's variances.
pub fn echo_snr_mc(ctx: &SlotContext, trials: usize, seed: u64, sampling: Sampling) -> Result<(f64, f64)> {
    ctx.validate()?;
    if trials == 0 {
        return Err(IsacError::InvalidParameter("trials must be at least 1".into()));
    }
    let scale = ctx.echo_scale();
    let sd = (ctx.angle_variance.0.sqrt(), ctx.angle_variance.1.sqrt());
    match sampling {
        Sampling::Plain => {
            let (m, s) = plain_mc(trials, seed, sd, |wx, wy| echo_gain_x(ctx, wx) * echo_gain_y(ctx, wy));
            Ok((scale * m, scale * s))
        }
        Sampling::Stratified { replicates } => {
            if replicates < 2 || trials < replicates {
                return Err(IsacError::InvalidParameter(format!(
                    "stratified sampling needs at least 2 replicates and one stratum each, got {replicates} for {trials} trials"
                )));
            }
            let n = trials / replicates;
            let est: Vec<f64> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream_rng(seed, r as u64);
                    let ex = stratified_axis(n, sd.0, &mut rng, |w| echo_gain_x(ctx, w));
                    let ey = stratified_axis(n, sd.1, &mut rng, |w| echo_gain_y(ctx, w));
                    ex * ey
                })
                .collect();
            let (m, s) = mean_and_stderr(&est);
            Ok((scale * m, scale * s))
        }
    }
}

/// Closed-form echo SNR
/// `beta_r eta dT P beta_g^2 L M_t M_r h(x, w_x) h(y, w_y) / (dt s_s)`.
pub fn echo_snr_closed(ctx: &SlotContext) -> Result<f64> {
    ctx.validate()?;
    let (vx, vy) = ctx.angle_variance;
    let hx = ctx.echo_spectrum(ctx.pointing.angle_x, vx, ctx.cfg.l_x)?;
    let hy = ctx.echo_spectrum(ctx.pointing.angle_y, vy, ctx.cfg.l_y)?;
    Ok(ctx.echo_scale() * (ctx.cfg.m_t * ctx.cfg.m_r) as f64 * hx * hy)
}

/// `4 P beta_g beta_h L M_t / s_c`.
pub fn p_tilde(cfg: &SystemConfig, beta_g: f64) -> f64 {
    4.0 * cfg.p_max_w * beta_g * cfg.beta_h * cfg.surface_elements() as f64 * cfg.m_t as f64 / cfg.sigma2_c_w
}

/// Closed-form S&C-phase rate `log2(1 + P~ (1 - beta_r) h(x, w_x) h(y, w_y))`.
pub fn rate_sc_closed(ctx: &SlotContext) -> Result<f64> {
    ctx.validate()?;
    let (vx, vy) = ctx.angle_variance;
    let g = ctx.comm_spectrum(ctx.pointing.angle_x, vx, ctx.cfg.l_x)?
        * ctx.comm_spectrum(ctx.pointing.angle_y, vy, ctx.cfg.l_y)?;
    Ok((p_tilde(ctx.cfg, ctx.beta_g()) * (1.0 - ctx.beta_r) * g).ln_1p() / std::f64::consts::LN_2)
}

/// Closed-form communication-only rate `log2(1 + P~ h(x, t_x) h(y, t_y))`
/// with the tracked variances `t`.
pub fn rate_c_closed(ctx: &SlotContext, tracked: (f64, f64)) -> Result<f64> {
    ctx.validate()?;
    let g = ctx.comm_spectrum(ctx.pointing.angle_x, tracked.0, ctx.cfg.l_x)?
        * ctx.comm_spectrum(ctx.pointing.angle_y, tracked.1, ctx.cfg.l_y)?;
    Ok((p_tilde(ctx.cfg, ctx.beta_g()) * g).ln_1p() / std::f64::consts::LN_2)
}

/// Both phase rates, their time-weighted average and the echo SNR.
pub fn rate_avg(ctx: &SlotContext, tracked: (f64, f64)) -> Result<RateBreakdown> {
    let rate_sc = rate_sc_closed(ctx)?;
    let rate_c = rate_c_closed(ctx, tracked)?;
    Ok(RateBreakdown {
        rate_sc,
        rate_c,
        rate_avg: combine(ctx.eta, rate_sc, rate_c),
        snr_echo: echo_snr_closed(ctx)?,
    })
}

/// `eta r_sc + (1 - eta) r_c`.
pub fn combine(eta: f64, rate_sc: f64, rate_c: f64) -> f64 {
    eta * rate_sc + (1.0 - eta) * rate_c
}

/// Approximated rate with the large-array spectrum, see [`RateModel::rate_hat`].
pub fn rate_hat(ctx: &SlotContext) -> Result<f64> {
    ctx.validate()?;
    RateModel::from_context(ctx)?.rate_hat(ctx.eta, ctx.beta_r)
}

/// Monte Carlo device rate `E[log2(1 + SNR)]` when a fraction `beta_t` of the
/// power is refracted and the true angles deviate from the pointing with the
/// given variances.
pub fn comm_rate_mc(
    ctx: &SlotContext,
    variances: (f64, f64),
    beta_t: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    ctx.validate()?;
    if trials == 0 {
        return Err(IsacError::InvalidParameter("trials must be at least 1".into()));
    }
    let scale = beta_t * ctx.comm_scale() * ctx.cfg.surface_elements() as f64;
    let cfg = ctx.cfg;
    let p = ctx.pointing;
    let (m, s) = plain_mc(trials, seed, (variances.0.sqrt(), variances.1.sqrt()), |wx, wy| {
        let dx = cos_error(p.angle_x, wx);
        let dy = cos_error(p.angle_y, wy);
        let snr = scale * fejer_kernel(dx, cfg.m_t) * fejer_kernel(dx, cfg.l_x) * fejer_kernel(dy, cfg.l_y);
        snr.ln_1p() / std::f64::consts::LN_2
    });
    Ok((m, s))
}

/// Realized device SNR for given pointing and true angles:
/// `beta_t P beta_g beta_h F_Mt(dx) L F_Lx(dx) F_Ly(dy) / s_c`.
pub fn realized_comm_snr(
    cfg: &SystemConfig,
    beta_g: f64,
    beta_t: f64,
    pointing: BeamPointing,
    true_x: f64,
    true_y: f64,
) -> f64 {
    let dx = pointing.angle_x.cos() - true_x.cos();
    let dy = pointing.angle_y.cos() - true_y.cos();
    beta_t * cfg.p_max_w * beta_g * cfg.beta_h / cfg.sigma2_c_w
        * fejer_kernel(dx, cfg.m_t)
        * cfg.surface_elements() as f64
        * fejer_kernel(dx, cfg.l_x)
        * fejer_kernel(dy, cfg.l_y)
}

/// Realized echo SNR for given pointing and true angles and a surface
/// reflection gain `|a^T Theta_R a|^2`.
pub fn realized_echo_snr(
    cfg: &SystemConfig,
    beta_g: f64,
    eta: f64,
    reflect_gain: f64,
    pointing: BeamPointing,
    true_x: f64,
) -> f64 {
    let dx = pointing.angle_x.cos() - true_x.cos();
    eta * cfg.slot_duration_s * cfg.p_max_w * beta_g * beta_g * reflect_gain
        * fejer_kernel(dx, cfg.m_t)
        * fejer_kernel(dx, cfg.m_r)
        / (cfg.symbol_duration_s * cfg.sigma2_s_w)
}

/// Everything the slot objective needs once the pointing and the path gain
/// are fixed. Evaluating a grid cell is then a handful of flops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    pub p_tilde: f64,
    pub angle_x: f64,
    pub angle_y: f64,
    pub prior_x: f64,
    pub prior_y: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub series_order: usize,
    pub l_x: usize,
    pub l_y: usize,
}

impl RateModel {
    pub fn from_context(ctx: &SlotContext) -> Result<Self> {
        let bg = ctx.beta_g();
        let (a_x, a_y) = compute_a(ctx.cfg, bg, ctx.pointing.angle_x, ctx.pointing.angle_y)?;
        Ok(Self {
            p_tilde: p_tilde(ctx.cfg, bg),
            angle_x: ctx.pointing.angle_x,
            angle_y: ctx.pointing.angle_y,
            prior_x: ctx.angle_variance.0,
            prior_y: ctx.angle_variance.1,
            a_x,
            a_y,
            series_order: ctx.cfg.series_order,
            l_x: ctx.cfg.l_x,
            l_y: ctx.cfg.l_y,
        })
    }

    fn h(&self, angle: f64, var: f64, l: usize) -> Result<f64> {
        h_or_peak(angle, var, self.series_order, 0.5 * l as f64)
    }

    fn h_tilde(&self, angle: f64, var: f64) -> Result<f64> {
        crate::math::h_tilde(angle, var)
    }

    /// Tracked variances after sensing with `eta beta_r`.
    pub fn tracked(&self, eta: f64, beta_r: f64) -> (f64, f64) {
        let eb = eta * beta_r;
        (tracked_variance(self.prior_x, self.a_x, eb), tracked_variance(self.prior_y, self.a_y, eb))
    }

    pub fn rate_sc(&self, beta_r: f64) -> Result<f64> {
        let g = self.h(self.angle_x, self.prior_x, self.l_x)? * self.h(self.angle_y, self.prior_y, self.l_y)?;
        Ok(log2_1p(self.p_tilde * (1.0 - beta_r) * g))
    }

    pub fn rate_c(&self, eta: f64, beta_r: f64) -> Result<f64> {
        let (tx, ty) = self.tracked(eta, beta_r);
        Ok(log2_1p(self.p_tilde * self.h(self.angle_x, tx, self.l_x)? * self.h(self.angle_y, ty, self.l_y)?))
    }

    /// Slot objective built from the closed-form rates.
    pub fn rate_p1(&self, eta: f64, beta_r: f64) -> Result<f64> {
        Ok(combine(eta, self.rate_sc(beta_r)?, self.rate_c(eta, beta_r)?))
    }

    /// As [`RateModel::rate_p1`] with every spectrum reduced to its leading term.
    pub fn rate_tilde(&self, eta: f64, beta_r: f64) -> Result<f64> {
        let (tx, ty) = self.tracked(eta, beta_r);
        let sc = log2_1p(
            self.p_tilde * (1.0 - beta_r) * self.h_tilde(self.angle_x, self.prior_x)? * self.h_tilde(self.angle_y, self.prior_y)?,
        );
        let c = log2_1p(self.p_tilde * self.h_tilde(self.angle_x, tx)? * self.h_tilde(self.angle_y, ty)?);
        Ok(combine(eta, sc, c))
    }

    /// `2 P beta_g beta_h L M_t / (pi sin x sin y s_x s_y s_c)` with `s` the
    /// prior angle standard deviations.
    pub fn c1(&self) -> f64 {
        self.p_tilde
            / (2.0
                * std::f64::consts::PI
                * self.angle_x.sin()
                * self.angle_y.sin()
                * (self.prior_x * self.prior_y).sqrt())
    }

    /// `eta log2(1 + C1 (1 - beta_r))
    ///  + (1 - eta) log2(1 + C1 sqrt((w_x eb + A_x)(w_y eb + A_y) / (A_x A_y)))`
    /// with `eb = eta beta_r`.
    pub fn rate_hat(&self, eta: f64, beta_r: f64) -> Result<f64> {
        if !(self.prior_x > 0.0 && self.prior_y > 0.0) {
            return Err(IsacError::InvalidParameter(
                "approximated rate needs positive prior variances".into(),
            ));
        }
        let c1 = self.c1();
        let eb = eta * beta_r;
        let cross = ((self.prior_x * eb + self.a_x) * (self.prior_y * eb + self.a_y) / (self.a_x * self.a_y)).sqrt();
        Ok(combine(eta, log2_1p(c1 * (1.0 - beta_r)), log2_1p(c1 * cross)))
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}
