//! Acceptance criteria. Each test prints one `PASS` or `FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a report.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use isac_core::channel::{device_channel, device_direction};
use isac_core::ios::{
    optimal_reflect_phases, optimal_refract_phases, reflect_gain_direct, refract_gain_direct, BeamPointing,
    IosProfile,
};
use isac_core::math::{fejer_kernel, wrapped_gaussian_pdf};
use isac_core::optimizer::{condition_map, linspace, optimize_slot, rate_grid, Objective, SearchSpec};
use isac_core::rate::{combine, comm_rate_mc, rate_avg, RateModel, Sampling, SlotContext};
use isac_core::sim::{sweep_power, validate_snr_convergence, Scheme};
use isac_core::tracking::{
    evolution_jacobian, kalman_update, state_evolve, tracked_variance, KalmanBelief, MeasurementVariance,
    VehicleState,
};
use isac_core::SystemConfig;
use isac_sim::initial_rate_model;
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!("{} criterion {id} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------

const SNR_TRIALS: usize = 100_000;
const SNR_LX: [usize; 4] = [10, 20, 40, 80];
const SNR_TOL_AT_40: f64 = 0.15;
const SNR_TOL_AT_80: f64 = 0.05;
const SNR_BUDGET: Duration = Duration::from_secs(60);

#[test]
fn criterion_1_echo_snr_converges_with_surface_size() {
    let cfg = SystemConfig::default();
    let t0 = Instant::now();
    let rows = validate_snr_convergence(&cfg, &SNR_LX, SNR_TRIALS, 1, Sampling::Stratified { replicates: 8 }).unwrap();
    let elapsed = t0.elapsed();
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_err).collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && errs[2] <= SNR_TOL_AT_40 && errs[3] <= SNR_TOL_AT_80 && elapsed < SNR_BUDGET;
    verdict(
        1,
        "echo SNR convergence",
        pass,
        &format!("rel_err {errs:.4?}, monotone={monotone}, {:.1} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const ETA_TARGET: (f64, f64) = (0.13, 0.23);
const BETA_TARGET: (f64, f64) = (0.75, 0.85);

/// Rates along one column rise then fall: no increase once a decrease was seen.
fn unimodal(values: &[f64]) -> bool {
    let mut falling = false;
    for w in values.windows(2) {
        let tol = 1e-12 * w[0].abs().max(1.0);
        if w[1] < w[0] - tol {
            falling = true;
        } else if w[1] > w[0] + tol && falling {
            return false;
        }
    }
    true
}

#[test]
fn criterion_2_optimum_at_initial_position() {
    let cfg = SystemConfig::default();
    let model = initial_rate_model(&cfg).unwrap();
    let spec = SearchSpec::default();
    let d = optimize_slot(&model, &spec).unwrap();
    let grid = rate_grid(&model, &spec).unwrap();
    let mut betas: Vec<f64> = grid.iter().map(|c| c.1).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let columns_unimodal = betas.iter().all(|&b| {
        let col: Vec<f64> = grid.iter().filter(|c| c.1 == b).map(|c| c.2).collect();
        unimodal(&col)
    });
    let in_eta = (ETA_TARGET.0..=ETA_TARGET.1).contains(&d.eta_star);
    let in_beta = (BETA_TARGET.0..=BETA_TARGET.1).contains(&d.beta_r_star);
    let pass = in_eta && in_beta && columns_unimodal;
    verdict(
        2,
        "slot optimum",
        pass,
        &format!(
            "eta*={:.2} (target {ETA_TARGET:?}), beta_r*={:.2} (target {BETA_TARGET:?}), columns unimodal={columns_unimodal}",
            d.eta_star, d.beta_r_star
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const MAP_N: usize = 20;
const MAP_RATIO: (f64, f64) = (0.1, 4.0);
const MAP_AGREEMENT: f64 = 0.95;
const MAP_BAND: f64 = 0.05;
const MAP_BUDGET: Duration = Duration::from_secs(30);

#[test]
fn criterion_3_sensing_condition_matches_optimizer() {
    let cfg = SystemConfig::default();
    let model = initial_rate_model(&cfg).unwrap();
    let spec = SearchSpec { eta_step: 0.01, beta_step: 0.01, objective: Objective::Approx };
    let t0 = Instant::now();
    let cells = condition_map(&model, &linspace(MAP_RATIO.0, MAP_RATIO.1, MAP_N), &spec).unwrap();
    let elapsed = t0.elapsed();
    let disagree: Vec<_> = cells.iter().filter(|c| (c.eta_star > 0.0) != c.needed_pred).collect();
    let agreement = 1.0 - disagree.len() as f64 / cells.len() as f64;
    let in_band = disagree.iter().all(|c| (c.condition_lhs - 2.0).abs() <= MAP_BAND * 2.0);
    let pass = agreement >= MAP_AGREEMENT && in_band && elapsed < MAP_BUDGET;
    verdict(
        3,
        "sensing condition",
        pass,
        &format!(
            "agreement {:.1}% over {} cells, disagreements near boundary={in_band}, {:.1} s",
            100.0 * agreement,
            cells.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const KALMAN_TUPLES: usize = 10;
const KALMAN_RUNS: usize = 10_000;
const KALMAN_TOL: f64 = 0.05;

#[test]
fn criterion_4_tracked_variance_matches_scalar_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..KALMAN_TUPLES {
        let prior: f64 = 10f64.powf(rng.random_range(-3.0..-1.5));
        let a: f64 = 10f64.powf(rng.random_range(-4.0..-1.5));
        let eta: f64 = rng.random_range(0.05..1.0);
        let beta_r: f64 = rng.random_range(0.05..1.0);
        let meas = MeasurementVariance::scaled(a, eta * beta_r);
        let centre = 1.5;
        let belief = KalmanBelief::new(
            VehicleState::new(centre, 1.5, 100.0, 20.0),
            Matrix4::from_diagonal(&Vector4::new(prior, 1.0, 1.0, 1.0)),
            Vector4::zeros(),
        )
        .unwrap();
        let truth_noise = Normal::new(0.0, prior.sqrt()).unwrap();
        let meas_noise = Normal::new(0.0, meas.value().unwrap().sqrt()).unwrap();
        let mut v = [MeasurementVariance::NoMeasurement; 4];
        v[0] = meas;
        let mut sq = 0.0;
        for _ in 0..KALMAN_RUNS {
            let truth = centre + truth_noise.sample(&mut rng);
            let mut z = belief.predicted;
            z.angle_x = truth + meas_noise.sample(&mut rng);
            let post = kalman_update(&belief, &z, v).unwrap();
            sq += (post.tracked.angle_x - truth).powi(2);
        }
        let empirical = sq / KALMAN_RUNS as f64;
        let closed = tracked_variance(prior, a, eta * beta_r);
        worst = worst.max((empirical - closed).abs() / closed);
    }
    let pass = worst <= KALMAN_TOL;
    verdict(4, "tracked variance", pass, &format!("worst relative error {:.2}% over {KALMAN_TUPLES} tuples", 100.0 * worst));
    assert!(pass);
}

// ---------------------------------------------------------------------------

const ORDER_SEEDS: u64 = 10;
const ORDER_ALPHA: f64 = 0.05;
const LOW_POWER: f64 = 0.005;
const HIGH_POWER: f64 = 0.1;

/// Two-sided exact sign test; ties are dropped.
fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    let mut tail = 0.0;
    let mut binom = 1.0f64;
    for i in 0..=k {
        if i > 0 {
            binom *= (n - i + 1) as f64 / i as f64;
        }
        tail += binom;
    }
    (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
}

#[test]
fn sign_test_examples() {
    assert!((sign_test_p(10, 0) - 2.0 / 1024.0).abs() < 1e-15);
    assert!((sign_test_p(9, 1) - 22.0 / 1024.0).abs() < 1e-15);
    assert!(sign_test_p(8, 2) > 0.05);
    assert_eq!(sign_test_p(5, 5), 1.0);
}

#[test]
fn criterion_5_scheme_ordering() {
    let cfg = SystemConfig::default();
    let rows: Vec<_> = (0..ORDER_SEEDS)
        .into_par_iter()
        .map(|seed| sweep_power(&cfg, &[LOW_POWER, HIGH_POWER], &Scheme::ALL, seed).unwrap())
        .collect();
    let rate = |r: &[isac_core::sim::PowerRow], p: f64, s: Scheme| {
        r.iter().find(|x| x.p_max_w == p && x.scheme == s).unwrap().mean_rate
    };
    let tally = |other: Scheme| {
        let (mut w, mut l) = (0, 0);
        for r in &rows {
            let (a, b) = (rate(r, HIGH_POWER, Scheme::Proposed), rate(r, HIGH_POWER, other));
            if a > b {
                w += 1;
            } else if a < b {
                l += 1;
            }
        }
        (w, l)
    };
    let (wp, lp) = tally(Scheme::Prediction);
    let (wr, lr) = tally(Scheme::Refraction);
    let p_pred = sign_test_p(wp, lp);
    let p_refr = sign_test_p(wr, lr);
    let gap = |p: f64| {
        rows.iter()
            .map(|r| (rate(r, p, Scheme::Proposed) - rate(r, p, Scheme::Prediction)) / rate(r, p, Scheme::Prediction))
            .sum::<f64>()
            / rows.len() as f64
    };
    let (gap_low, gap_high) = (gap(LOW_POWER), gap(HIGH_POWER));
    let pass = wp > lp && p_pred < ORDER_ALPHA && wr > lr && p_refr < ORDER_ALPHA && gap_low > gap_high;
    verdict(
        5,
        "scheme ordering",
        pass,
        &format!(
            "vs prediction {wp}-{lp} (p={p_pred:.4}), vs refraction {wr}-{lr} (p={p_refr:.4}), \
             relative gap {gap_low:.3} at {LOW_POWER} W vs {gap_high:.3} at {HIGH_POWER} W"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const JENSEN_CONTEXTS: usize = 100;
const JENSEN_TRIALS: usize = 10_000;
const JENSEN_SIGMAS: f64 = 2.0;

#[test]
fn criterion_6_monte_carlo_rate_below_closed_form() {
    let cfg = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..JENSEN_CONTEXTS {
        let ctx = SlotContext {
            cfg: &cfg,
            true_state: VehicleState::new(1.5, 1.5, rng.random_range(30.0..150.0), 20.0),
            pointing: BeamPointing::new(rng.random_range(0.3..PI - 0.3), rng.random_range(0.3..PI - 0.3)),
            eta: rng.random_range(0.0..1.0),
            beta_r: rng.random_range(0.0..1.0),
            angle_variance: (10f64.powf(rng.random_range(-4.0..-1.0)), 10f64.powf(rng.random_range(-4.0..-1.0))),
        };
        let tracked = RateModel::from_context(&ctx).unwrap().tracked(ctx.eta, ctx.beta_r);
        let closed = rate_avg(&ctx, tracked).unwrap().rate_avg;
        let seed = 2 * i as u64;
        let (sc, sc_se) = comm_rate_mc(&ctx, ctx.angle_variance, 1.0 - ctx.beta_r, JENSEN_TRIALS, seed).unwrap();
        let (c, c_se) = comm_rate_mc(&ctx, tracked, 1.0, JENSEN_TRIALS, seed + 1).unwrap();
        let mc = combine(ctx.eta, sc, c);
        let se = ((ctx.eta * sc_se).powi(2) + ((1.0 - ctx.eta) * c_se).powi(2)).sqrt();
        let excess = mc - closed - JENSEN_SIGMAS * se;
        worst = worst.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
    }
    let pass = violations == 0;
    verdict(
        6,
        "concavity bound",
        pass,
        &format!("{violations} violations over {JENSEN_CONTEXTS} contexts, worst margin {worst:.3e} bits"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const FEJER_TOL: f64 = 1e-9;
const PDF_TOL: f64 = 1e-3;
const JACOBIAN_TOL: f64 = 1e-5;
const SPLIT_DRAWS: usize = 10_000;
const INVARIANT_BUDGET: Duration = Duration::from_secs(120);

fn fejer_identity_holds() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let grids: [Vec<f64>; 4] = [
        (0..=2000).map(|i| -1.0 + i as f64 * 1e-3).collect(),
        (0..200).map(|i| 10f64.powf(-12.0 + 0.05 * i as f64)).collect(),
        (0..200).map(|i| 2.0 * (i as f64 - 100.0) + 1e-7 * (i % 7) as f64).collect(),
        (0..2000).map(|_| rng.random_range(-50.0..50.0)).collect(),
    ];
    let mut worst = 0.0f64;
    for m in [1usize, 8, 80, 257] {
        for grid in &grids {
            for &x in grid {
                let direct: Complex64 = (0..m).map(|k| Complex64::from_polar(1.0, PI * k as f64 * x)).sum();
                let direct = direct.norm_sqr() / m as f64;
                // Relative to the kernel's peak m: exact nulls have no relative scale of their own.
                worst = worst.max((fejer_kernel(x, m) - direct).abs() / m as f64);
            }
        }
    }
    (worst <= FEJER_TOL, worst)
}

fn best_discrete(gain: impl Fn(&[f64]) -> f64) -> f64 {
    let levels: Vec<f64> = (0..8).map(|k| k as f64 * TAU / 8.0).collect();
    let mut best = 0.0f64;
    for i in 0..8usize.pow(4) {
        let ph = [levels[i % 8], levels[(i / 8) % 8], levels[(i / 64) % 8], levels[i / 512]];
        best = best.max(gain(&ph));
    }
    best
}

fn phase_design_beats_search() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    (0..5).all(|_| {
        let point = BeamPointing::new(rng.random_range(0.2..2.9), rng.random_range(0.2..2.9));
        let (az, el) = (rng.random_range(-PI..PI), rng.random_range(0.2..2.9));
        let (pu, ou) = device_direction(az, el);
        let dev = device_channel(az, el, 1.0, 2, 2).unwrap();

        let refl = |ph: &[f64]| IosProfile::new(2, 2, vec![0.0; 4], ph.to_vec(), 1.0).unwrap();
        let refl_best = best_discrete(|ph| reflect_gain_direct(&refl(ph), point.angle_x, point.angle_y).unwrap());
        let refl_design = reflect_gain_direct(
            &refl(&optimal_reflect_phases(point, 2, 2, 0.0)),
            point.angle_x,
            point.angle_y,
        )
        .unwrap();

        let refr = |ph: &[f64]| IosProfile::new(2, 2, ph.to_vec(), vec![0.0; 4], 0.0).unwrap();
        let refr_best = best_discrete(|ph| refract_gain_direct(&refr(ph), &dev, point.angle_x, point.angle_y).unwrap());
        let refr_design = refract_gain_direct(
            &refr(&optimal_refract_phases(point, pu, ou, 2, 2, 0.0)),
            &dev,
            point.angle_x,
            point.angle_y,
        )
        .unwrap();

        refl_design >= refl_best - 1e-12
            && refr_design >= refr_best - 1e-12
            && (refl_design - 16.0).abs() < 1e-9
            && (refr_design - 16.0).abs() < 1e-9
    })
}

/// Coherent reflection gain `(sum_l sqrt(b_l))^2` for per-element fractions
/// `b_l`: the common fraction with the same total never loses.
fn equal_split_dominates() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let l = 16;
    (0..SPLIT_DRAWS).all(|_| {
        let split: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = split.iter().sum();
        let uneven = split.iter().map(|b| b.sqrt()).sum::<f64>().powi(2);
        let even = (l as f64 * (total / l as f64).sqrt()).powi(2);
        uneven <= even * (1.0 + 1e-12)
    })
}

fn jacobian_matches_differences() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = VehicleState::new(
            rng.random_range(0.2..2.9),
            rng.random_range(0.2..2.9),
            rng.random_range(10.0..200.0),
            rng.random_range(0.0..40.0),
        );
        let analytic = evolution_jacobian(s, 0.02).unwrap();
        for j in 0..4 {
            let (mut lo, mut hi) = (s.to_vector(), s.to_vector());
            lo[j] -= h;
            hi[j] += h;
            let f_hi = state_evolve(VehicleState::from_vector(&hi), 0.02, None).unwrap().to_vector();
            let f_lo = state_evolve(VehicleState::from_vector(&lo), 0.02, None).unwrap().to_vector();
            let col = (f_hi - f_lo) / (2.0 * h);
            worst = worst.max((analytic.column(j) - col).abs().max());
        }
    }
    (worst < JACOBIAN_TOL, worst)
}

/// Simpson rule in the angle variable, mapping back through `y = 2 cos t - 2 cos(centre)`.
fn pdf_integrals() -> (bool, f64) {
    let mut worst = 0.0f64;
    for &(centre, var) in &[(PI / 3.0, 0.1), (PI / 2.0, 0.5), (2.7, 0.3), (0.4, 0.05)] {
        let n = 20_000;
        let step = PI / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let t = i as f64 * step;
            let y = 2.0 * t.cos() - 2.0 * f64::cos(centre);
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * wrapped_gaussian_pdf(y, centre, var, 3).unwrap_or(0.0) * 2.0 * t.sin();
        }
        worst = worst.max((acc * step / 3.0 - 1.0).abs());
    }
    (worst < PDF_TOL, worst)
}

#[test]
fn criterion_7_oracle_invariants() {
    let t0 = Instant::now();
    let (fejer, fejer_err) = fejer_identity_holds();
    let phases = phase_design_beats_search();
    let split = equal_split_dominates();
    let (jac, jac_err) = jacobian_matches_differences();
    let (pdf, pdf_err) = pdf_integrals();
    let elapsed = t0.elapsed();
    let pass = fejer && phases && split && jac && pdf && elapsed < INVARIANT_BUDGET;
    verdict(
        7,
        "oracle invariants",
        pass,
        &format!(
            "kernel identity {fejer} ({fejer_err:.1e}), phase search {phases}, equal split {split}, \
             jacobian {jac} ({jac_err:.1e}), pdf mass {pdf} ({pdf_err:.1e}), {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}
