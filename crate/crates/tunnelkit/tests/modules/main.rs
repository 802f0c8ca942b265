//! Per-module integration tests: closed-form oracles and proptest invariants.

mod assembly;
mod partition;
mod perturbation;
mod regions;
mod spectral;
mod tuning;
mod verify;

use tunnelkit::tuning::{auto_tune, TunedParameters};

pub fn desk_params() -> TunedParameters {
    auto_tune(1.0, 1.0, 0.0, 1.0, 0.0).expect("desk tuning")
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
