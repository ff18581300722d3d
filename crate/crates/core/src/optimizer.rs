//! Per-slot choice of the sensing fraction `eta` and the reflect share
//! `beta_r` by exhaustive grid search, and the closed-form test for whether
//! sensing is worth any time at all.

use rayon::prelude::*;

use crate::error::{IsacError, Result};
use crate::rate::{combine, RateModel};

/// Relative margin a grid value must clear to replace the incumbent. Values
/// closer than this are treated as ties and resolved toward smaller
/// `(eta, beta_r)`.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Which slot objective to maximize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Closed-form rates with the full angle spectrum.
    ClosedForm,
    /// The large-array approximation [`RateModel::rate_hat`].
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpec {
    pub eta_step: f64,
    pub beta_step: f64,
    pub objective: Objective,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self { eta_step: 0.01, beta_step: 0.01, objective: Objective::ClosedForm }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        for s in [self.eta_step, self.beta_step] {
            if !(s > 0.0 && s <= 0.5) {
                return Err(IsacError::InvalidParameter(format!(
                    "grid step must lie in (0, 0.5], got {s}"
                )));
            }
        }
        Ok(())
    }

    fn evaluate(&self, model: &RateModel, eta: f64, beta_r: f64) -> Result<f64> {
        match self.objective {
            Objective::ClosedForm => model.rate_p1(eta, beta_r),
            Objective::Approx => model.rate_hat(eta, beta_r),
        }
    }
}

/// Grid points `0, step, 2 step, ..., 1`. The last point is always exactly 1.
pub fn grid_axis(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
    if (1.0 - v[n]).abs() > 1e-9 {
        v.push(1.0);
    } else {
        v[n] = 1.0;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDecision {
    pub eta_star: f64,
    pub beta_r_star: f64,
    pub rate_star: f64,
    /// `w_x / A_x + w_y / A_y`.
    pub condition_value: f64,
}

/// Objective on the full grid, row-major with `eta` outer: `(eta, beta_r, rate)`.
pub fn rate_grid(model: &RateModel, spec: &SearchSpec) -> Result<Vec<(f64, f64, f64)>> {
    spec.validate()?;
    let etas = grid_axis(spec.eta_step);
    let betas = grid_axis(spec.beta_step);
    let cells: Vec<(usize, f64, f64)> = etas
        .iter()
        .flat_map(|&e| betas.iter().enumerate().map(move |(j, &b)| (j, e, b)))
        .collect();
    match spec.objective {
        Objective::ClosedForm => {
            // The S&C rate only depends on beta_r, so evaluate it once per column.
            let sc: Vec<f64> = betas.iter().map(|&b| model.rate_sc(b)).collect::<Result<_>>()?;
            cells
                .par_iter()
                .map(|&(j, e, b)| model.rate_c(e, b).map(|c| (e, b, combine(e, sc[j], c))))
                .collect()
        }
        Objective::Approx => cells
            .par_iter()
            .map(|&(_, e, b)| spec.evaluate(model, e, b).map(|r| (e, b, r)))
            .collect(),
    }
}

/// Scan in `(eta, beta_r)` lexicographic order keeping the first maximum up to
/// [`TIE_TOLERANCE`].
fn lexicographic_argmax(grid: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &(e, b, r) in grid {
        if !r.is_finite() {
            return Err(IsacError::Numerical(format!(
                "objective is not finite at eta = {e}, beta_r = {b}"
            )));
        }
        match best {
            None => best = Some((e, b, r)),
            Some((_, _, br)) if r > br + TIE_TOLERANCE * br.abs().max(1.0) => best = Some((e, b, r)),
            _ => {}
        }
    }
    best.ok_or_else(|| IsacError::Numerical("empty grid".into()))
}

pub fn optimize_slot(model: &RateModel, spec: &SearchSpec) -> Result<SlotDecision> {
    let grid = rate_grid(model, spec)?;
    let (eta_star, beta_r_star, rate_star) = lexicographic_argmax(&grid)?;
    Ok(SlotDecision {
        eta_star,
        beta_r_star,
        rate_star,
        condition_value: model.prior_x / model.a_x + model.prior_y / model.a_y,
    })
}

/// Whether the sensing phase should get any time:
/// `w_x / A_x + w_y / A_y > 2`. Returns the decision and the left-hand side.
pub fn sc_phase_needed(prior_x: f64, prior_y: f64, a_x: f64, a_y: f64) -> Result<(bool, f64)> {
    if !(a_x > 0.0 && a_y > 0.0) {
        return Err(IsacError::InvalidParameter(format!(
            "variance scales must be positive, got {a_x}, {a_y}"
        )));
    }
    if !(prior_x >= 0.0 && prior_y >= 0.0) {
        return Err(IsacError::InvalidParameter(format!(
            "prior variances must be nonnegative, got {prior_x}, {prior_y}"
        )));
    }
    let lhs = prior_x / a_x + prior_y / a_y;
    Ok((lhs > 2.0, lhs))
}

/// Slope of the approximated rate in `eta` at `eta = 0`, as a function of
/// `beta_r`:
///
/// `g(b) = log2(1 + C1 (1 - b)) - log2(1 + C1) + C1 (r_x + r_y) b / (2 (1 + C1) ln 2)`
///
/// with `r = w / A`.
pub fn g_of_beta(model: &RateModel, beta_r: f64) -> f64 {
    let c1 = model.c1();
    let d2 = model.a_x / model.prior_x;
    let d3 = model.a_y / model.prior_y;
    let d1 = c1 * (model.prior_x * model.prior_y / (model.a_x * model.a_y)).sqrt();
    let root = (d2 * d3).sqrt();
    let ln2 = std::f64::consts::LN_2;
    // d1 * root equals C1; using C1 in both logs makes g(0) exactly zero.
    (c1 * (1.0 - beta_r)).ln_1p() / ln2 - c1.ln_1p() / ln2
        + d1 * (d2 + d3) * beta_r / (2.0 * root * (1.0 + c1) * ln2)
}

/// `g'(0) = C1 ((r_x + r_y) / 2 - 1) / ((1 + C1) ln 2)`.
pub fn g_prime_at_zero(model: &RateModel) -> f64 {
    let c1 = model.c1();
    let s = model.prior_x / model.a_x + model.prior_y / model.a_y;
    c1 * (0.5 * s - 1.0) / ((1.0 + c1) * std::f64::consts::LN_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeDiagnostics {
    /// `(beta_r, g(beta_r))` on the requested grid.
    pub g_samples: Vec<(f64, f64)>,
    pub g_prime_at_0: f64,
}

pub fn derivative_diagnostics(model: &RateModel, beta_step: f64) -> Result<DerivativeDiagnostics> {
    if !(model.prior_x > 0.0 && model.prior_y > 0.0 && model.a_x > 0.0 && model.a_y > 0.0) {
        return Err(IsacError::InvalidParameter(
            "diagnostics need positive priors and variance scales".into(),
        ));
    }
    let g_samples = grid_axis(beta_step).into_iter().map(|b| (b, g_of_beta(model, b))).collect();
    Ok(DerivativeDiagnostics { g_samples, g_prime_at_0: g_prime_at_zero(model) })
}

/// One cell of the sensing-condition map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCell {
    pub ratio_x: f64,
    pub ratio_y: f64,
    pub condition_lhs: f64,
    pub needed_pred: bool,
    pub eta_star: f64,
}

/// For every pair of prior-to-scale ratios, compare the closed-form condition
/// with the `eta` the grid search picks. The priors of `base` are kept and the
/// variance scales are set to `prior / ratio`.
pub fn condition_map(base: &RateModel, ratios: &[f64], spec: &SearchSpec) -> Result<Vec<ConditionCell>> {
    let mut out = Vec::with_capacity(ratios.len() * ratios.len());
    for &rx in ratios {
        for &ry in ratios {
            if !(rx > 0.0 && ry > 0.0) {
                return Err(IsacError::InvalidParameter(format!("ratios must be positive, got {rx}, {ry}")));
            }
            let model = RateModel { a_x: base.prior_x / rx, a_y: base.prior_y / ry, ..*base };
            let (needed, lhs) = sc_phase_needed(model.prior_x, model.prior_y, model.a_x, model.a_y)?;
            let d = optimize_slot(&model, spec)?;
            out.push(ConditionCell {
                ratio_x: rx,
                ratio_y: ry,
                condition_lhs: lhs,
                needed_pred: needed,
                eta_star: d.eta_star,
            });
        }
    }
    Ok(out)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
