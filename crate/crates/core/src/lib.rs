//! Stealthiness-distortion tradeoffs for scalar linear Gaussian systems
//! under input-injection attacks.
//!
//! An attacker adds a signal `n` to the input of a first-order plant,
//! either running open loop or inside a feedback loop. Stealthiness is the
//! KL divergence rate between the attacked and unattacked output processes;
//! distortion is the mean-square state deviation the attack induces.
//!
//! * [`lti`]: plants, controllers, stability and realizations.
//! * [`spectra`]: sampled spectra, output spectra, autocovariance and Welch estimation.
//! * [`divergence`]: Gaussian KL, KL rate and the Itakura–Saito distance.
//! * [`tradeoff`]: worst-case attack spectra, tradeoff curves and the
//!   finite-horizon water-filling oracle.
//! * [`simulate`]: colored Gaussian synthesis and paired Monte Carlo runs.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod error;
pub mod lti;
pub mod simulate;
pub mod spectra;
pub mod tradeoff;

pub use divergence::{gaussian_kl, itakura_saito, kl_rate, scalar_gaussian_kl, DivergenceValue};
pub use error::{Error, Result};
pub use lti::{
    check_closed_loop_stability, plant_frequency_response, realize_controller, FirstOrderPlant,
    StabilityReport, StateSpaceRealization, SystemModel, TransferFunction,
};
pub use simulate::{estimate_distortion, simulate, synthesize_colored_gaussian, DistortionEstimate, SimulationResult};
pub use spectra::{
    autocovariance_from_spectrum, integrate_spectrum, output_spectrum, toeplitz_covariance, welch_estimate,
    CovarianceMatrix, FrequencyGrid, SpectrumSamples,
};
pub use tradeoff::{
    finite_horizon_min_kl, solve_zeta_for_distortion, solve_zeta_for_kl, tradeoff_curve, waterfill_parallel,
    worst_case_attack, AttackTarget, CurveRow, CurveTable, TargetKind, TradeoffPoint, WaterfillAllocation,
};
