//! Link-level numerics for an intelligent omni-surface (IOS) mounted on a
//! moving vehicle and served by a roadside unit (RSU) with integrated sensing
//! and communication.
//!
//! Each slot is split into a sensing-and-communication (S&C) phase of length
//! `eta` in which a fraction `beta_r` of the incident power is reflected back
//! to the RSU as an echo, and a communication-only phase in which the surface
//! refracts everything toward the in-vehicle device. The crate provides:
//!
//! * [`math`]: steering vectors, the Fejér kernel, the wrapped-Gaussian angle
//!   spectrum `h(x, y)` and friends.
//! * [`channel`]: RSU/IOS/device channel matrices built from geometry.
//! * [`ios`]: optimal surface phase profiles and beamforming gains.
//! * [`tracking`]: the vehicle state model and the Kalman beam tracker.
//! * [`rate`]: echo SNR and achievable rates, Monte Carlo and closed form.
//! * [`optimizer`]: per-slot grid search over `(eta, beta_r)` and the
//!   sensing-phase existence condition.
//! * [`sim`]: full trajectory simulation with the proposed scheme and the two
//!   benchmarks.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod ios;
pub mod math;
pub mod mc;
pub mod optimizer;
pub mod rate;
pub mod sim;
pub mod tracking;

pub use config::SystemConfig;
pub use error::{IsacError, Result};
