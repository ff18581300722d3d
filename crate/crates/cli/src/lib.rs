//! Configuration files and experiment subcommands for the `isac-sim` binary.
//!
//! Every subcommand writes exactly one CSV file, atomically.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use isac_core::config::{db_to_linear, dbm_to_watts, linear_to_db};
use isac_core::ios::BeamPointing;
use isac_core::optimizer::{condition_map, linspace, optimize_slot, rate_grid, Objective, SearchSpec};
use isac_core::rate::{RateModel, Sampling, SlotContext};
use isac_core::sim::{run_trajectory, sweep_power, validate_snr_convergence, Scheme};
use isac_core::tracking::VehicleState;
use isac_core::{IsacError, SystemConfig};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<IsacError> for CliError {
    fn from(e: IsacError) -> Self {
        match e {
            IsacError::Config(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Count,
}

/// `(key, required, kind)`. Keys marked required are the reference-table
/// parameters; the rest fall back to the built-in scenario.
const KEYS: &[(&str, bool, Kind)] = &[
    ("total_time_s", true, Kind::Real),
    ("num_slots", true, Kind::Count),
    ("m_t", true, Kind::Count),
    ("m_r", true, Kind::Count),
    ("l_x", true, Kind::Count),
    ("l_y", true, Kind::Count),
    ("sigma2_r", true, Kind::Real),
    ("p_max_w", true, Kind::Real),
    ("beta0_db", true, Kind::Real),
    ("sigma2_s_dbm", true, Kind::Real),
    ("sigma2_omega_varphi", true, Kind::Real),
    ("sigma2_omega_phi", true, Kind::Real),
    ("symbol_duration_s", true, Kind::Real),
    ("sigma2_c_dbm", true, Kind::Real),
    ("carrier_hz", true, Kind::Real),
    ("slot_duration_s", true, Kind::Real),
    ("rsu_x_m", false, Kind::Real),
    ("rsu_y_m", false, Kind::Real),
    ("rsu_z_m", false, Kind::Real),
    ("vehicle_x_m", false, Kind::Real),
    ("vehicle_y_m", false, Kind::Real),
    ("vehicle_z_m", false, Kind::Real),
    ("speed_mps", false, Kind::Real),
    ("beta_h_db", false, Kind::Real),
    ("device_azimuth_deg", false, Kind::Real),
    ("device_elevation_deg", false, Kind::Real),
    ("sigma2_omega_d", false, Kind::Real),
    ("sigma2_omega_v", false, Kind::Real),
    ("a_d", false, Kind::Real),
    ("a_v", false, Kind::Real),
    ("series_order", false, Kind::Count),
    ("seed", false, Kind::Count),
];

/// Names of every accepted config key.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.0)
}

fn key_spec(key: &str) -> Option<(bool, Kind)> {
    KEYS.iter().find(|k| k.0 == key).map(|k| (k.1, k.2))
}

fn parse_value(key: &str, raw: &str, kind: Kind) -> Result<f64, String> {
    let v: f64 = raw.trim().parse().map_err(|_| format!("value {raw:?} for {key} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("value for {key} must be finite"));
    }
    if kind == Kind::Count && (v < 0.0 || v.fract() != 0.0) {
        return Err(format!("value for {key} must be a nonnegative integer, got {raw}"));
    }
    Ok(v)
}

fn apply(cfg: &mut SystemConfig, key: &str, v: f64) {
    match key {
        "total_time_s" => cfg.total_time_s = v,
        "num_slots" => cfg.num_slots = v as usize,
        "m_t" => cfg.m_t = v as usize,
        "m_r" => cfg.m_r = v as usize,
        "l_x" => cfg.l_x = v as usize,
        "l_y" => cfg.l_y = v as usize,
        "sigma2_r" => cfg.sigma2_r = v,
        "p_max_w" => cfg.p_max_w = v,
        "beta0_db" => cfg.beta0 = db_to_linear(v),
        "sigma2_s_dbm" => cfg.sigma2_s_w = dbm_to_watts(v),
        "sigma2_omega_varphi" => cfg.sigma2_omega_x = v,
        "sigma2_omega_phi" => cfg.sigma2_omega_y = v,
        "symbol_duration_s" => cfg.symbol_duration_s = v,
        "sigma2_c_dbm" => cfg.sigma2_c_w = dbm_to_watts(v),
        "carrier_hz" => cfg.carrier_hz = v,
        "slot_duration_s" => cfg.slot_duration_s = v,
        "rsu_x_m" => cfg.rsu_position[0] = v,
        "rsu_y_m" => cfg.rsu_position[1] = v,
        "rsu_z_m" => cfg.rsu_position[2] = v,
        "vehicle_x_m" => cfg.vehicle_position[0] = v,
        "vehicle_y_m" => cfg.vehicle_position[1] = v,
        "vehicle_z_m" => cfg.vehicle_position[2] = v,
        "speed_mps" => cfg.speed_mps = v,
        "beta_h_db" => cfg.beta_h = db_to_linear(v),
        "device_azimuth_deg" => cfg.device_azimuth = v.to_radians(),
        "device_elevation_deg" => cfg.device_elevation = v.to_radians(),
        "sigma2_omega_d" => cfg.sigma2_omega_d = v,
        "sigma2_omega_v" => cfg.sigma2_omega_v = v,
        "a_d" => cfg.a_d = v,
        "a_v" => cfg.a_v = v,
        "series_order" => cfg.series_order = v as usize,
        "seed" => cfg.seed = v as u64,
        _ => unreachable!("key table and setter disagree on {key}"),
    }
}

/// Parse the `key = value` config format. Blank lines and text after `#` are
/// ignored. Unknown and duplicate keys are errors, as are missing reference
/// parameters.
pub fn parse_config_str(text: &str) -> Result<SystemConfig, CliError> {
    let mut cfg = SystemConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {lineno}: expected `key = value`")))?;
        let key = key.trim();
        let (_, kind) = key_spec(key).ok_or_else(|| CliError::Config(format!("line {lineno}: unknown key {key:?}")))?;
        if let Some(first) = seen.insert(key.to_string(), lineno) {
            return Err(CliError::Config(format!(
                "line {lineno}: duplicate key {key:?} (first set on line {first})"
            )));
        }
        let v = parse_value(key, raw, kind).map_err(|m| CliError::Config(format!("line {lineno}: {m}")))?;
        apply(&mut cfg, key, v);
    }
    for (key, required, _) in KEYS {
        if *required && !seen.contains_key(*key) {
            return Err(CliError::Config(format!("missing required key {key:?}")));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SystemConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Apply `key=value` overrides on top of a parsed config and revalidate.
pub fn apply_overrides(cfg: &mut SystemConfig, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        let key = key.trim();
        let (_, kind) = key_spec(key).ok_or_else(|| CliError::Config(format!("override names unknown key {key:?}")))?;
        let v = parse_value(key, raw, kind).map_err(CliError::Config)?;
        apply(cfg, key, v);
    }
    cfg.validate()?;
    Ok(())
}

/// Twelve significant digits, in a form `str::parse::<f64>` reads back.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.11e}")
    }
}

/// Write `rows` under `header` to `path` through a temporary file in the
/// same directory, renamed into place once complete.
pub fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir)?;
    {
        let mut w = csv::Writer::from_writer(tmp.as_file());
        w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "isac-sim", version, about = "Link-level experiments for a vehicle-mounted intelligent omni-surface")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Config file (`key = value` lines). Defaults to the built-in reference scenario.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path. Defaults to `<subcommand>.csv`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo trials (validate-snr).
    #[arg(long, global = true, default_value_t = 100_000)]
    pub trials: usize,
    /// Override a config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Grid resolution for eta and beta_r.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub grid_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    /// Closed-form rates.
    Exact,
    /// Large-array approximation.
    Approx,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Exact => Objective::ClosedForm,
            ObjectiveArg::Approx => Objective::Approx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Plain,
    Stratified,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo vs closed-form echo SNR as the surface grows.
    ValidateSnr {
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 40, 80])]
        lx: Vec<usize>,
        #[arg(long, value_enum, default_value_t = SamplingArg::Stratified)]
        sampling: SamplingArg,
    },
    /// Slot objective over the full (eta, beta_r) grid at the initial position.
    OptimizeSlot {
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Exact)]
        objective: ObjectiveArg,
    },
    /// Per-slot traces of every scheme along the trajectory.
    Simulate,
    /// Mean trajectory rate of every scheme against transmit power.
    SweepPower {
        #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.005, 0.01, 0.05, 0.1])]
        powers: Vec<f64>,
    },
    /// Closed-form sensing condition against the optimizer's choice.
    ConditionMap {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        ratio_min: f64,
        #[arg(long, default_value_t = 4.0)]
        ratio_max: f64,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Approx)]
        objective: ObjectiveArg,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ValidateSnr { .. } => "validate-snr",
            Command::OptimizeSlot { .. } => "optimize-slot",
            Command::Simulate => "simulate",
            Command::SweepPower { .. } => "sweep-power",
            Command::ConditionMap { .. } => "condition-map",
        }
    }
}

pub fn load_config(common: &CommonArgs) -> Result<SystemConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => parse_config(p)?,
        None => SystemConfig::default(),
    };
    apply_overrides(&mut cfg, &common.overrides)?;
    Ok(cfg)
}

/// Slot model at the vehicle's initial position with perfect pointing.
pub fn initial_rate_model(cfg: &SystemConfig) -> Result<RateModel, CliError> {
    let los = cfg.line_of_sight(0.0)?;
    let ctx = SlotContext {
        cfg,
        true_state: VehicleState::new(los.angle_x, los.angle_y, los.distance, cfg.speed_mps),
        pointing: BeamPointing::new(los.angle_x, los.angle_y),
        eta: 0.0,
        beta_r: 0.0,
        angle_variance: (cfg.sigma2_omega_x, cfg.sigma2_omega_y),
    };
    Ok(RateModel::from_context(&ctx)?)
}

fn search(common: &CommonArgs, objective: Objective) -> SearchSpec {
    SearchSpec { eta_step: common.grid_step, beta_step: common.grid_step, objective }
}

pub const SIMULATE_HEADER: [&str; 10] = [
    "slot", "x_m", "scheme", "eta", "beta_r", "rate_sc", "rate_c", "rate_avg", "snr_echo_db", "sigma2_tracked_phi",
];
pub const VALIDATE_HEADER: [&str; 5] = ["lx", "snr_mc", "snr_closed", "rel_err", "stderr"];
pub const OPTIMIZE_HEADER: [&str; 3] = ["eta", "beta_r", "rate"];
pub const SWEEP_HEADER: [&str; 3] = ["p_max_w", "scheme", "mean_rate"];
pub const CONDITION_HEADER: [&str; 5] = ["ratio_x", "ratio_y", "condition_lhs", "needed_pred", "eta_star"];

/// Run one subcommand. Returns the path written and a one-line summary.
pub fn run(cli: &Cli) -> Result<(PathBuf, String), CliError> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())));
    let mut summary = String::new();
    match &cli.command {
        Command::ValidateSnr { lx, sampling } => {
            let sampling = match sampling {
                SamplingArg::Plain => Sampling::Plain,
                SamplingArg::Stratified => Sampling::Stratified { replicates: 8 },
            };
            let rows = validate_snr_convergence(&cfg, lx, common.trials, common.seed, sampling)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![r.lx.to_string(), fmt_num(r.snr_mc), fmt_num(r.snr_closed), fmt_num(r.rel_err), fmt_num(r.stderr)]
                })
                .collect();
            write_csv_atomic(&out, &VALIDATE_HEADER, &table)?;
            for r in &rows {
                let _ = write!(summary, "lx={} rel_err={:.4} ", r.lx, r.rel_err);
            }
        }
        Command::OptimizeSlot { objective } => {
            let model = initial_rate_model(&cfg)?;
            let spec = search(common, (*objective).into());
            let grid = rate_grid(&model, &spec)?;
            let d = optimize_slot(&model, &spec)?;
            let table: Vec<Vec<String>> =
                grid.iter().map(|&(e, b, r)| vec![fmt_num(e), fmt_num(b), fmt_num(r)]).collect();
            write_csv_atomic(&out, &OPTIMIZE_HEADER, &table)?;
            let _ = write!(
                summary,
                "eta*={} beta_r*={} rate*={} condition={}",
                fmt_num(d.eta_star),
                fmt_num(d.beta_r_star),
                fmt_num(d.rate_star),
                fmt_num(d.condition_value)
            );
        }
        Command::Simulate => {
            let runs: Vec<_> = Scheme::ALL
                .par_iter()
                .map(|&s| run_trajectory(&cfg, s, common.seed))
                .collect::<Result<_, _>>()?;
            let mut table = Vec::new();
            for r in &runs {
                for s in &r.slots {
                    table.push(vec![
                        s.slot.to_string(),
                        fmt_num(s.x_m),
                        r.scheme.label().to_string(),
                        fmt_num(s.eta),
                        fmt_num(s.beta_r),
                        fmt_num(s.rate_sc),
                        fmt_num(s.rate_c),
                        fmt_num(s.rate_avg),
                        fmt_num(linear_to_db(s.snr_echo)),
                        fmt_num(s.sigma2_tracked_y),
                    ]);
                }
                let _ = write!(summary, "{}={} ", r.scheme.label(), fmt_num(r.mean_rate));
            }
            write_csv_atomic(&out, &SIMULATE_HEADER, &table)?;
        }
        Command::SweepPower { powers } => {
            let rows = sweep_power(&cfg, powers, &Scheme::ALL, common.seed)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![fmt_num(r.p_max_w), r.scheme.label().to_string(), fmt_num(r.mean_rate)])
                .collect();
            write_csv_atomic(&out, &SWEEP_HEADER, &table)?;
            let _ = write!(summary, "{} rows", rows.len());
        }
        Command::ConditionMap { n, ratio_min, ratio_max, objective } => {
            if !(*ratio_min > 0.0 && ratio_max > ratio_min) || *n == 0 {
                return Err(CliError::Config("ratio range must satisfy 0 < min < max and n >= 1".into()));
            }
            let model = initial_rate_model(&cfg)?;
            let ratios = linspace(*ratio_min, *ratio_max, *n);
            let cells = condition_map(&model, &ratios, &search(common, (*objective).into()))?;
            let agree = cells.iter().filter(|c| (c.eta_star > 0.0) == c.needed_pred).count();
            let table: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        fmt_num(c.ratio_x),
                        fmt_num(c.ratio_y),
                        fmt_num(c.condition_lhs),
                        c.needed_pred.to_string(),
                        fmt_num(c.eta_star),
                    ]
                })
                .collect();
            write_csv_atomic(&out, &CONDITION_HEADER, &table)?;
            let _ = write!(summary, "agreement {agree}/{}", cells.len());
        }
    }
    Ok((out, summary.trim_end().to_string()))
}

/// Size the global worker pool from `ISAC_SIM_THREADS` if it is set.
pub fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ISAC_SIM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("ISAC_SIM_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Config("ISAC_SIM_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

/// Render a config back into the file format, reference keys first.
pub fn render_config(cfg: &SystemConfig) -> String {
    let mut s = String::new();
    let pairs: Vec<(&str, String)> = vec![
        ("total_time_s", fmt_num(cfg.total_time_s)),
        ("num_slots", cfg.num_slots.to_string()),
        ("m_t", cfg.m_t.to_string()),
        ("m_r", cfg.m_r.to_string()),
        ("l_x", cfg.l_x.to_string()),
        ("l_y", cfg.l_y.to_string()),
        ("sigma2_r", fmt_num(cfg.sigma2_r)),
        ("p_max_w", fmt_num(cfg.p_max_w)),
        ("beta0_db", fmt_num(linear_to_db(cfg.beta0))),
        ("sigma2_s_dbm", fmt_num(linear_to_db(cfg.sigma2_s_w) + 30.0)),
        ("sigma2_omega_varphi", fmt_num(cfg.sigma2_omega_x)),
        ("sigma2_omega_phi", fmt_num(cfg.sigma2_omega_y)),
        ("symbol_duration_s", fmt_num(cfg.symbol_duration_s)),
        ("sigma2_c_dbm", fmt_num(linear_to_db(cfg.sigma2_c_w) + 30.0)),
        ("carrier_hz", fmt_num(cfg.carrier_hz)),
        ("slot_duration_s", fmt_num(cfg.slot_duration_s)),
        ("rsu_x_m", fmt_num(cfg.rsu_position[0])),
        ("rsu_y_m", fmt_num(cfg.rsu_position[1])),
        ("rsu_z_m", fmt_num(cfg.rsu_position[2])),
        ("vehicle_x_m", fmt_num(cfg.vehicle_position[0])),
        ("vehicle_y_m", fmt_num(cfg.vehicle_position[1])),
        ("vehicle_z_m", fmt_num(cfg.vehicle_position[2])),
        ("speed_mps", fmt_num(cfg.speed_mps)),
        ("beta_h_db", fmt_num(linear_to_db(cfg.beta_h))),
        ("device_azimuth_deg", fmt_num(cfg.device_azimuth.to_degrees())),
        ("device_elevation_deg", fmt_num(cfg.device_elevation.to_degrees())),
        ("sigma2_omega_d", fmt_num(cfg.sigma2_omega_d)),
        ("sigma2_omega_v", fmt_num(cfg.sigma2_omega_v)),
        ("a_d", fmt_num(cfg.a_d)),
        ("a_v", fmt_num(cfg.a_v)),
        ("series_order", cfg.series_order.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Print `msg` to stderr, ignoring a closed pipe.
pub fn report(msg: &str) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}
