//! Time-domain synthesis and paired attacked/unattacked simulation.
//!
//! Random streams are fixed per signal so that the attacked and unattacked
//! runs see identical noise and input draws.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lti::{realize_controller, SystemModel};
use crate::spectra::SpectrumSamples;

pub const STREAM_PROCESS_NOISE: u64 = 0;
pub const STREAM_MEASUREMENT_NOISE: u64 = 1;
pub const STREAM_INPUT: u64 = 2;
pub const STREAM_ATTACK: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stationary Gaussian series with spectrum `S`, drawn from the attack stream.
pub fn synthesize_colored_gaussian(spectrum: &SpectrumSamples, length: usize, seed: u64) -> Result<Vec<f64>> {
    synthesize_on_stream(spectrum, length, seed, STREAM_ATTACK)
}

/// Frequency-domain synthesis on an FFT of `length + n` points.
///
/// The spectrum is linearly interpolated onto the longer grid, each bin gets
/// an independent complex Gaussian coefficient with `E|X_m|² = M S(ω_m)`,
/// conjugate symmetry makes the inverse transform real, and the first `n`
/// samples are dropped.
pub fn synthesize_on_stream(spectrum: &SpectrumSamples, length: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let n = spectrum.grid().len();
    if length == 0 || !length.is_multiple_of(n) {
        return Err(Error::invalid("length", format!("must be a positive multiple of the grid size {n}, got {length}")));
    }
    let total = length + n;
    let ratio = total / n;
    let values = spectrum.values();
    let level = |m: usize| {
        let (j, rem) = (m / ratio, m % ratio);
        let frac = rem as f64 / ratio as f64;
        (1.0 - frac) * values[j] + frac * values[(j + 1) % n]
    };

    let mut rng = rng(seed, stream);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut coeffs = vec![Complex64::new(0.0, 0.0); total];
    let half = total / 2;
    let scale = total as f64;
    coeffs[0] = Complex64::new((scale * level(0)).sqrt() * gauss(), 0.0);
    for m in 1..half {
        let amp = (0.5 * scale * level(m)).sqrt();
        let c = Complex64::new(amp * gauss(), amp * gauss());
        coeffs[m] = c;
        coeffs[total - m] = c.conj();
    }
    coeffs[half] = Complex64::new((scale * level(half)).sqrt() * gauss(), 0.0);

    FftPlanner::<f64>::new().plan_fft_inverse(total).process(&mut coeffs);
    Ok(coeffs[n..].iter().map(|c| c.re / scale).collect())
}

/// Paired trajectories; index `k` is the `k`-th recorded step after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    /// Injected attack (zeros when unattacked).
    pub n: Vec<f64>,
    pub horizon: usize,
    pub seed: u64,
}

impl SimulationResult {
    /// `x̂[k] - x[k]`.
    pub fn state_deviation(&self) -> Vec<f64> {
        self.x_hat.iter().zip(&self.x).map(|(a, b)| a - b).collect()
    }

    /// `ŷ[k] - y[k]`, the attack seen at the output.
    pub fn output_deviation(&self) -> Vec<f64> {
        self.y_hat.iter().zip(&self.y).map(|(a, b)| a - b).collect()
    }
}

/// Number of discarded warm-up steps for a loop with the given spectral radius.
pub fn burn_in_steps(spectral_radius: f64) -> usize {
    (10.0 / (1.0 - spectral_radius)).ceil() as usize
}

struct Drive<'a> {
    w: &'a [f64],
    v: &'a [f64],
    u: &'a [f64],
}

struct Trajectory {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn run(model: &SystemModel, drive: &Drive, attack: Option<&[f64]>, burn: usize, horizon: usize) -> Result<Trajectory> {
    let plant = model.plant();
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let attack_at = |k: usize| match attack {
        Some(n) if k >= burn => n[k - burn],
        _ => 0.0,
    };
    let mut out = Trajectory { x: Vec::with_capacity(horizon), y: Vec::with_capacity(horizon) };
    let mut x = 0.0;
    match model {
        SystemModel::OpenLoop { .. } => {
            for k in 0..burn + horizon {
                let y = c * x + drive.v[k];
                if k >= burn {
                    out.x.push(x);
                    out.y.push(y);
                }
                x = a * x + b * (drive.u[k] + attack_at(k)) + drive.w[k];
            }
        }
        SystemModel::ClosedLoop { controller, .. } => {
            let realization = realize_controller(controller)?;
            let order = realization.order();
            let mut state = vec![0.0; order];
            let mut scratch = vec![0.0; order];
            for k in 0..burn + horizon {
                let y = c * x + drive.v[k];
                if k >= burn {
                    out.x.push(x);
                    out.y.push(y);
                }
                let u = -realization.step(&mut state, &mut scratch, y);
                x = a * x + b * (u + attack_at(k)) + drive.w[k];
            }
        }
    }
    Ok(out)
}

/// Runs the model with and without the attack on shared noise draws.
pub fn simulate(model: &SystemModel, attack: Option<&[f64]>, horizon: usize, seed: u64) -> Result<SimulationResult> {
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    if let Some(n) = attack {
        if n.len() < horizon {
            return Err(Error::invalid("attack", format!("length {} is shorter than the horizon {horizon}", n.len())));
        }
    }
    let radius = model.spectral_radius()?;
    let burn = burn_in_steps(radius);
    let total = burn + horizon;
    let plant = model.plant();

    let white = |stream: u64, variance: f64| -> Vec<f64> {
        if variance == 0.0 {
            return vec![0.0; total];
        }
        let sd = variance.sqrt();
        let mut rng = rng(seed, stream);
        (0..total).map(|_| { let g: f64 = StandardNormal.sample(&mut rng); sd * g }).collect::<Vec<f64>>()
    };
    let w = white(STREAM_PROCESS_NOISE, plant.sigma_w2());
    let v = white(STREAM_MEASUREMENT_NOISE, plant.sigma_v2());
    let u = match model {
        SystemModel::OpenLoop { input_spectrum, .. } if !input_spectrum.is_identically_zero() => {
            let n = input_spectrum.grid().len();
            let mut u = synthesize_on_stream(input_spectrum, total.div_ceil(n) * n, seed, STREAM_INPUT)?;
            u.truncate(total);
            u
        }
        _ => vec![0.0; total],
    };
    let drive = Drive { w: &w, v: &v, u: &u };

    let clean = run(model, &drive, None, burn, horizon)?;
    let attacked = match attack {
        Some(n) => run(model, &drive, Some(n), burn, horizon)?,
        None => Trajectory { x: clean.x.clone(), y: clean.y.clone() },
    };
    Ok(SimulationResult {
        x: clean.x,
        x_hat: attacked.x,
        y: clean.y,
        y_hat: attacked.y,
        n: attack.map_or_else(|| vec![0.0; horizon], |n| n[..horizon].to_vec()),
        horizon,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEstimate {
    /// Time average of `(x̂ - x)²`.
    pub state: f64,
    /// Time average of `(ŷ - y)²`; equals `c²·state` up to round-off.
    pub output: f64,
}

pub fn estimate_distortion(result: &SimulationResult) -> DistortionEstimate {
    let mean_sq = |v: Vec<f64>| v.iter().map(|d| d * d).sum::<f64>() / v.len().max(1) as f64;
    DistortionEstimate { state: mean_sq(result.state_deviation()), output: mean_sq(result.output_deviation()) }
}
