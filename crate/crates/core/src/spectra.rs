//! Sampled power spectra on a uniform periodic frequency grid.
//!
//! A spectrum `S(ω)` is stored at `ω_j = 2πj/n`, `j = 0..n`, and is scaled
//! so that `(1/2π) ∫ S(ω) dω` is the process variance. Integrals over the
//! period use the periodic trapezoid rule, which reduces to the sample mean.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lti::SystemModel;

/// Spectrum values below this are treated as exact zeros.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Relative tolerance for the even-symmetry check on raw sample arrays.
const SYMMETRY_TOL: f64 = 1e-9;

/// `n` uniform samples of `[0, 2π)`, `n` a power of two of at least 64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrequencyGrid {
    n: usize,
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 64;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::invalid(
                "grid_n",
                format!("must be a power of two >= {}, got {n}", Self::MIN_POINTS),
            ));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn omega(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n as f64
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(|j| self.omega(j))
    }

    /// Grid with twice as many points.
    pub fn refined(&self) -> Self {
        Self { n: self.n * 2 }
    }
}

/// Nonnegative, even-symmetric samples of a power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSamples {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl SpectrumSamples {
    /// Validates raw samples. Near-symmetric input is accepted and
    /// symmetrized exactly by averaging bins `j` and `n - j`.
    pub fn new(grid: FrequencyGrid, mut values: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::invalid("spectrum", format!("expected {n} samples, got {}", values.len())));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid("spectrum", format!("sample {j} is {v}; values must be finite and nonnegative")));
        }
        let scale = values.iter().cloned().fold(0.0, f64::max);
        for j in 1..n / 2 {
            let (lo, hi) = (values[j], values[n - j]);
            if (lo - hi).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(
                    "spectrum",
                    format!("not even-symmetric: bin {j} = {lo}, bin {} = {hi}", n - j),
                ));
            }
            let mean = 0.5 * (lo + hi);
            values[j] = mean;
            values[n - j] = mean;
        }
        for v in &mut values {
            if *v < ZERO_FLOOR {
                *v = 0.0;
            }
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `f` on `[0, π]` and mirrors, so symmetry is exact.
    pub fn from_fn(grid: FrequencyGrid, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let n = grid.len();
        let mut values = vec![0.0; n];
        for (j, v) in values.iter_mut().enumerate().take(n / 2 + 1) {
            *v = f(grid.omega(j));
        }
        for j in n / 2 + 1..n {
            values[j] = values[n - j];
        }
        Self::new(grid, values)
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: FrequencyGrid, level: f64) -> Result<Self> {
        Self::new(grid, vec![level; grid.len()])
    }

    /// AR(1) spectrum `σ² / |e^{jω} - pole|²` of `x[k+1] = pole x[k] + e[k]`.
    pub fn ar1(grid: FrequencyGrid, pole: f64, innovation_variance: f64) -> Result<Self> {
        if pole.abs() >= 1.0 {
            return Err(Error::invalid("pole", format!("AR(1) pole must satisfy |pole| < 1, got {pole}")));
        }
        Self::from_fn(grid, |w| innovation_variance / (1.0 + pole * pole - 2.0 * pole * w.cos()))
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    pub fn try_add(&self, other: &SpectrumSamples) -> Result<Self> {
        ensure_same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

pub(crate) fn ensure_same_grid(a: &SpectrumSamples, b: &SpectrumSamples) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::invalid(
            "spectrum",
            format!("grid mismatch: {} vs {} points", a.grid.len(), b.grid.len()),
        ));
    }
    Ok(())
}

/// Output spectrum of the unattacked system.
///
/// Open loop: `b²c² S_u / |e^{jω} - a|² + c² σ_w² / |e^{jω} - a|² + σ_v²`.
/// Closed loop: `|c / Δ|² σ_w² + |(e^{jω} - a) / Δ|² σ_v²` with
/// `Δ = e^{jω} - a + K(e^{jω}) bc`.
pub fn output_spectrum(model: &SystemModel, grid: &FrequencyGrid) -> Result<SpectrumSamples> {
    model.validate()?;
    let spectrum = match model {
        SystemModel::OpenLoop { plant, input_spectrum } => {
            if input_spectrum.grid() != *grid {
                return Err(Error::invalid(
                    "input_spectrum",
                    format!("sampled on {} points, requested grid has {}", input_spectrum.grid().len(), grid.len()),
                ));
            }
            let (a, b, c) = (plant.a(), plant.b(), plant.c());
            let su = input_spectrum.values();
            let values = grid
                .points()
                .enumerate()
                .map(|(j, w)| {
                    let gap = 1.0 + a * a - 2.0 * a * w.cos();
                    (b * b * c * c * su[j] + c * c * plant.sigma_w2()) / gap + plant.sigma_v2()
                })
                .collect();
            SpectrumSamples::new(*grid, values)?
        }
        SystemModel::ClosedLoop { plant, controller } => {
            let (a, bc, c) = (plant.a(), plant.b() * plant.c(), plant.c());
            SpectrumSamples::from_fn(*grid, |w| {
                let z = Complex64::from_polar(1.0, w);
                let delta = (z - a + controller.eval(z) * bc).norm_sqr();
                (c * c * plant.sigma_w2() + (z - a).norm_sqr() * plant.sigma_v2()) / delta
            })?
        }
    };
    if spectrum.is_identically_zero() {
        return Err(Error::invalid(
            "model",
            "output spectrum is identically zero (no noise and no input); divergence ratios are undefined",
        ));
    }
    Ok(spectrum)
}

/// `(1/2π) ∫ S(ω) dω`, i.e. the process variance.
pub fn integrate_spectrum(spectrum: &SpectrumSamples) -> f64 {
    mean(spectrum.values())
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `R(k) = (1/n) Σ_j S(ω_j) cos(ω_j k)` for `k = 0..=max_lag`.
pub fn autocovariance_from_spectrum(spectrum: &SpectrumSamples, max_lag: usize) -> Result<Vec<f64>> {
    let n = spectrum.grid().len();
    if max_lag >= n / 2 {
        return Err(Error::invalid(
            "max_lag",
            format!("lag {max_lag} aliases on a grid of {n} points (must be < {})", n / 2),
        ));
    }
    let mut buf: Vec<Complex64> = spectrum.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut r: Vec<f64> = buf[..=max_lag].iter().map(|c| c.re * scale).collect();
    // the lag-0 value is the plain sample mean, exactly
    r[0] = integrate_spectrum(spectrum);
    Ok(r)
}

/// Symmetric covariance matrix of a finite block of a real process.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    mat: Mat<f64>,
}

impl CovarianceMatrix {
    /// Checks shape and symmetry; positive semidefiniteness is checked by the
    /// consumers that need eigenvalues anyway.
    pub fn new(mat: Mat<f64>) -> Result<Self> {
        let m = mat.nrows();
        if m == 0 || mat.ncols() != m {
            return Err(Error::invalid("covariance", format!("must be square and nonempty, got {}x{}", m, mat.ncols())));
        }
        let scale = (0..m).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..m {
            for j in 0..i {
                let (x, y) = (mat[(i, j)], mat[(j, i)]);
                if !x.is_finite() || (x - y).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance", format!("not symmetric at ({i}, {j}): {x} vs {y}")));
                }
            }
        }
        Ok(Self { mat })
    }

    pub fn from_fn(order: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Mat::from_fn(order, order, f))
    }

    pub fn identity(order: usize) -> Self {
        Self { mat: Mat::identity(order, order) }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.mat
    }

    /// Eigenvalues in nondecreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.mat
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))
    }
}

/// Order-`(k+1)` Toeplitz matrix with entries `R(|i - j|)`.
pub fn toeplitz_covariance(spectrum: &SpectrumSamples, horizon_k: usize) -> Result<CovarianceMatrix> {
    let r = autocovariance_from_spectrum(spectrum, horizon_k)?;
    let m = horizon_k + 1;
    Ok(CovarianceMatrix { mat: Mat::from_fn(m, m, |i, j| r[i.abs_diff(j)]) })
}

/// Averaged Hann-windowed periodogram with segments of `grid.len()` samples.
///
/// Normalized by the window energy so that `integrate_spectrum` of the
/// estimate approximates the sample variance of `series`.
pub fn welch_estimate(
    series: &[f64],
    segment_len: usize,
    overlap: f64,
    grid: &FrequencyGrid,
) -> Result<SpectrumSamples> {
    if segment_len != grid.len() {
        return Err(Error::invalid(
            "segment_len",
            format!("must equal the grid size {}, got {segment_len}", grid.len()),
        ));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", format!("must lie in [0, 1), got {overlap}")));
    }
    if series.len() < 2 * segment_len {
        return Err(Error::invalid(
            "series",
            format!("length {} is shorter than two segments of {segment_len}", series.len()),
        ));
    }
    let n = segment_len;
    let hop = ((n as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let energy: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= series.len() {
        for (slot, (x, w)) in buf.iter_mut().zip(series[start..start + n].iter().zip(&window)) {
            *slot = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (energy * segments as f64);
    let mut values: Vec<f64> = acc.iter().map(|v| v * scale).collect();
    for j in 1..n / 2 {
        let avg = 0.5 * (values[j] + values[n - j]);
        values[j] = avg;
        values[n - j] = avg;
    }
    SpectrumSamples::new(*grid, values)
}
