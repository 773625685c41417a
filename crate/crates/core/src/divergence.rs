//! Gaussian KL divergence, KL divergence rate and the Itakura–Saito distance.
//!
//! All values are in nats. `KL(p_y || p_x)` is the divergence of the
//! perturbed distribution `y` from the reference `x`; argument order
//! throughout is reference first.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::spectra::{ensure_same_grid, mean, CovarianceMatrix, SpectrumSamples, ZERO_FLOOR};

/// Relative eigenvalue / spectrum floor below which a reference is treated as singular.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// A nonnegative divergence in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DivergenceValue(f64);

impl DivergenceValue {
    /// Clamps round-off below zero.
    pub(crate) fn from_raw(v: f64) -> Self {
        Self(v.max(0.0))
    }

    pub fn nats(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for DivergenceValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

/// `x - ln(1 + x)`, accurate near zero.
#[inline]
pub(crate) fn x_minus_log1p(x: f64) -> f64 {
    x - x.ln_1p()
}

/// `½ [tr(Σ_y Σ_x⁻¹) - ln det(Σ_y Σ_x⁻¹) - m]`.
///
/// Computed by whitening: with `Σ_x = U Λ Uᵀ` and `W = Λ^{-1/2} Uᵀ`, the
/// eigenvalues `d_i` of `W Σ_y Wᵀ` give `½ Σ (d_i - ln d_i - 1)`.
pub fn gaussian_kl(sigma_x: &CovarianceMatrix, sigma_y: &CovarianceMatrix) -> Result<DivergenceValue> {
    let m = sigma_x.order();
    if sigma_y.order() != m {
        return Err(Error::invalid("sigma_y", format!("order {} does not match sigma_x order {m}", sigma_y.order())));
    }
    let evd = sigma_x
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lambdas: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let largest = lambdas.iter().cloned().fold(0.0, f64::max);
    if let Some((index, &eigenvalue)) = lambdas
        .iter()
        .enumerate()
        .find(|(_, &l)| !(l > POSITIVITY_TOL * largest) || largest <= 0.0)
    {
        return Err(Error::SingularCovariance { eigenvalue, index, largest });
    }

    let u = evd.U();
    let w = Mat::<f64>::from_fn(m, m, |i, j| u[(j, i)] / lambdas[i].sqrt());
    let whitened = &w * sigma_y.as_mat() * w.transpose();
    // symmetrize round-off before the symmetric solver
    let whitened = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (whitened[(i, j)] + whitened[(j, i)]));
    let d = whitened
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    if let Some((index, &eigenvalue)) = d.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NotPositiveSemidefinite { eigenvalue, index });
    }
    let total: f64 = d.iter().map(|&v| x_minus_log1p(v - 1.0)).sum();
    Ok(DivergenceValue::from_raw(0.5 * total))
}

/// `½ [σ_y²/σ_x² - ln(σ_y²/σ_x²) - 1]`.
pub fn scalar_gaussian_kl(var_x: f64, var_y: f64) -> Result<DivergenceValue> {
    if !(var_x > 0.0) || !var_x.is_finite() {
        return Err(Error::invalid("var_x", format!("must be positive, got {var_x}")));
    }
    if !(var_y > 0.0) || !var_y.is_finite() {
        return Err(Error::invalid("var_y", format!("must be positive (divergence is infinite at zero), got {var_y}")));
    }
    Ok(DivergenceValue::from_raw(0.5 * x_minus_log1p(var_y / var_x - 1.0)))
}

/// Bin-wise check that the reference spectrum is bounded away from zero.
pub(crate) fn ensure_positive_reference(reference: &SpectrumSamples) -> Result<()> {
    let floor = (POSITIVITY_TOL * reference.max()).max(ZERO_FLOOR);
    let grid = reference.grid();
    match reference.values().iter().position(|&v| !(v > floor)) {
        Some(bin) => Err(Error::RatioUndefined { bin, omega: grid.omega(bin), value: reference.values()[bin] }),
        None => Ok(()),
    }
}

/// `(1/2π) ∫ {S_ŷ/S_y - ln(S_ŷ/S_y) - 1} dω`.
pub fn itakura_saito(s_y: &SpectrumSamples, s_yhat: &SpectrumSamples) -> Result<DivergenceValue> {
    ensure_same_grid(s_y, s_yhat)?;
    ensure_positive_reference(s_y)?;
    let grid = s_y.grid();
    if let Some(bin) = s_yhat.values().iter().position(|&v| v == 0.0) {
        return Err(Error::RatioUndefined { bin, omega: grid.omega(bin), value: 0.0 });
    }
    let terms: Vec<f64> = s_y
        .values()
        .iter()
        .zip(s_yhat.values())
        .map(|(&r, &p)| x_minus_log1p((p - r) / r))
        .collect();
    Ok(DivergenceValue::from_raw(mean(&terms)))
}

/// KL divergence rate of `y + n̂` from `y` for independent stationary
/// Gaussian `y` and `n̂`: `(1/2π) ∫ ½ {S_n̂/S_y - ln(1 + S_n̂/S_y)} dω`.
pub fn kl_rate(s_y: &SpectrumSamples, s_nhat: &SpectrumSamples) -> Result<DivergenceValue> {
    ensure_same_grid(s_y, s_nhat)?;
    ensure_positive_reference(s_y)?;
    let terms: Vec<f64> = s_y
        .values()
        .iter()
        .zip(s_nhat.values())
        .map(|(&y, &n)| 0.5 * x_minus_log1p(n / y))
        .collect();
    Ok(DivergenceValue::from_raw(mean(&terms)))
}
