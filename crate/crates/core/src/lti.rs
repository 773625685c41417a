//! Scalar plants, rational controllers and their frequency responses.
//!
//! Polynomials are always stored as coefficient lists in descending powers
//! of `z`, so `[1.0, -0.3]` is `z - 0.3`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectra::{FrequencyGrid, SpectrumSamples};

/// Margin inside the unit circle required of every closed-loop pole.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// First-order plant `x[k+1] = a x[k] + b u[k] + w[k]`, `y[k] = c x[k] + v[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderPlant {
    a: f64,
    b: f64,
    c: f64,
    sigma_w2: f64,
    sigma_v2: f64,
}

impl FirstOrderPlant {
    pub fn new(a: f64, b: f64, c: f64, sigma_w2: f64, sigma_v2: f64) -> Result<Self> {
        for (field, value) in [("a", a), ("b", b), ("c", c), ("sigma_w2", sigma_w2), ("sigma_v2", sigma_v2)] {
            if !value.is_finite() {
                return Err(Error::invalid(field, format!("must be finite, got {value}")));
            }
        }
        if b == 0.0 {
            return Err(Error::invalid("b", "input gain must be nonzero (controllability)"));
        }
        if c == 0.0 {
            return Err(Error::invalid("c", "output gain must be nonzero (observability)"));
        }
        if sigma_w2 < 0.0 {
            return Err(Error::invalid("sigma_w2", format!("variance must be nonnegative, got {sigma_w2}")));
        }
        if sigma_v2 < 0.0 {
            return Err(Error::invalid("sigma_v2", format!("variance must be nonnegative, got {sigma_v2}")));
        }
        Ok(Self { a, b, c, sigma_w2, sigma_v2 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn sigma_v2(&self) -> f64 {
        self.sigma_v2
    }

    /// `P(z) = bc / (z - a)` evaluated at an arbitrary point.
    pub fn transfer_at(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.b * self.c, 0.0) / (z - self.a)
    }
}

/// Evaluates `P(e^{jω})` at every grid point.
pub fn plant_frequency_response(plant: &FirstOrderPlant, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "frequency grid is empty"));
    }
    Ok(grid.points().map(|w| plant.transfer_at(Complex64::from_polar(1.0, w))).collect())
}

/// Proper rational transfer function `num(z) / den(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl TransferFunction {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if denominator.is_empty() {
            return Err(Error::invalid("denominator", "no coefficients"));
        }
        if numerator.is_empty() {
            return Err(Error::invalid("numerator", "no coefficients"));
        }
        if numerator.iter().chain(&denominator).any(|v| !v.is_finite()) {
            return Err(Error::invalid("controller", "coefficients must be finite"));
        }
        if denominator[0] == 0.0 {
            return Err(Error::invalid("denominator", "leading coefficient must be nonzero"));
        }
        // Leading zeros in the numerator do not change its degree in any meaningful way.
        let first = numerator.iter().position(|&v| v != 0.0).unwrap_or(numerator.len() - 1);
        let numerator = numerator[first..].to_vec();
        if numerator.len() > denominator.len() {
            return Err(Error::invalid(
                "controller",
                format!(
                    "improper transfer function: numerator degree {} exceeds denominator degree {}",
                    numerator.len() - 1,
                    denominator.len() - 1
                ),
            ));
        }
        Ok(Self { numerator, denominator })
    }

    /// Static gain `K(z) = k`.
    pub fn constant(gain: f64) -> Result<Self> {
        Self::new(vec![gain], vec![1.0])
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn order(&self) -> usize {
        self.denominator.len() - 1
    }

    /// Numerator padded with leading zeros to the denominator's length.
    pub(crate) fn padded_numerator(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.denominator.len() - self.numerator.len()];
        out.extend_from_slice(&self.numerator);
        out
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.numerator, z) / horner(&self.denominator, z)
    }

    pub fn frequency_response(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        grid.points().map(|w| self.eval(Complex64::from_polar(1.0, w))).collect()
    }
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// The two configurations under attack.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    /// Stable plant driven by a stationary input with spectrum `input_spectrum`.
    OpenLoop { plant: FirstOrderPlant, input_spectrum: SpectrumSamples },
    /// Plant in negative feedback `u = -K(z) y`.
    ClosedLoop { plant: FirstOrderPlant, controller: TransferFunction },
}

impl SystemModel {
    /// Builds an open-loop model, enforcing `|a| < 1`.
    pub fn open_loop(plant: FirstOrderPlant, input_spectrum: SpectrumSamples) -> Result<Self> {
        let model = SystemModel::OpenLoop { plant, input_spectrum };
        model.validate()?;
        Ok(model)
    }

    /// Builds a closed-loop model, enforcing closed-loop stability.
    pub fn closed_loop(plant: FirstOrderPlant, controller: TransferFunction) -> Result<Self> {
        let model = SystemModel::ClosedLoop { plant, controller };
        model.validate()?;
        Ok(model)
    }

    pub fn plant(&self) -> &FirstOrderPlant {
        match self {
            SystemModel::OpenLoop { plant, .. } | SystemModel::ClosedLoop { plant, .. } => plant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spectral_radius().map(|_| ())
    }

    /// Largest pole magnitude of the configuration; errors if it is not below one.
    pub fn spectral_radius(&self) -> Result<f64> {
        match self {
            SystemModel::OpenLoop { plant, .. } => {
                if plant.a.abs() < 1.0 - STABILITY_MARGIN {
                    Ok(plant.a.abs())
                } else {
                    Err(Error::Unstable {
                        detail: format!("open-loop plant requires |a| < 1, got a = {}", plant.a),
                    })
                }
            }
            SystemModel::ClosedLoop { plant, controller } => {
                let report = check_closed_loop_stability(plant, controller)?;
                if report.stable {
                    Ok(report.spectral_radius())
                } else {
                    Err(Error::Unstable {
                        detail: format!(
                            "closed loop must be stable, largest pole magnitude is {}",
                            report.spectral_radius()
                        ),
                    })
                }
            }
        }
    }

    /// Transfer function from the injected attack `n` to the output deviation `ŷ - y`.
    ///
    /// Open loop this is the plant itself; closed loop it is `P / (1 + K P)`.
    pub fn attack_response(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        match self {
            SystemModel::OpenLoop { plant, .. } => grid
                .points()
                .map(|w| plant.transfer_at(Complex64::from_polar(1.0, w)))
                .collect(),
            SystemModel::ClosedLoop { plant, controller } => {
                let bc = plant.b * plant.c;
                grid.points()
                    .map(|w| {
                        let z = Complex64::from_polar(1.0, w);
                        Complex64::new(bc, 0.0) / (z - plant.a + controller.eval(z) * bc)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Closed-loop poles, in the same order as `pole_magnitudes`.
    pub poles: Vec<Complex64>,
    /// Sorted descending.
    pub pole_magnitudes: Vec<f64>,
}

impl StabilityReport {
    pub fn spectral_radius(&self) -> f64 {
        self.pole_magnitudes.first().copied().unwrap_or(0.0)
    }
}

/// Roots of `(z - a) den_K(z) + bc num_K(z)`.
pub fn check_closed_loop_stability(
    plant: &FirstOrderPlant,
    controller: &TransferFunction,
) -> Result<StabilityReport> {
    let den = controller.denominator();
    let num = controller.padded_numerator();
    let bc = plant.b * plant.c;

    let mut chi = vec![0.0; den.len() + 1];
    for (i, &d) in den.iter().enumerate() {
        chi[i] += d;
        chi[i + 1] -= plant.a * d;
    }
    for (i, &n) in num.iter().enumerate() {
        chi[i + 1] += bc * n;
    }

    let poles = polynomial_roots(&chi)?;
    let mut pairs: Vec<(f64, Complex64)> = poles.into_iter().map(|p| (p.norm(), p)).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let stable = pairs.iter().all(|(m, _)| *m < 1.0 - STABILITY_MARGIN);
    Ok(StabilityReport {
        stable,
        poles: pairs.iter().map(|p| p.1).collect(),
        pole_magnitudes: pairs.iter().map(|p| p.0).collect(),
    })
}

/// Roots of a real polynomial via companion-matrix eigenvalues.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let Some(first) = coeffs.iter().position(|&c| c != 0.0) else {
        return Err(Error::invalid("characteristic polynomial", "all coefficients are zero"));
    };
    let poly = &coeffs[first..];
    let degree = poly.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = poly[0];
    let companion = Mat::<f64>::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -poly[j + 1] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let eig = companion.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(eig.into_iter().map(|c| Complex64::new(c.re, c.im)).collect())
}

/// State-space model `ξ[k+1] = A ξ[k] + B e[k]`, `out[k] = C ξ[k] + D e[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceRealization {
    /// Row-major `order x order`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl StateSpaceRealization {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// `C (zI - A)^{-1} B + D`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = Mat::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - self.a[i * n + j]
        });
        let rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.partial_piv_lu().solve(&rhs);
        let mut acc = Complex64::new(self.d, 0.0);
        for i in 0..n {
            acc += x[(i, 0)] * self.c[i];
        }
        acc
    }

    pub fn frequency_response(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        grid.points().map(|w| self.eval(Complex64::from_polar(1.0, w))).collect()
    }

    /// Advances the state by one step and returns the output for input `e`.
    pub(crate) fn step(&self, state: &mut [f64], scratch: &mut [f64], e: f64) -> f64 {
        let n = self.order();
        let out = self.c.iter().zip(state.iter()).map(|(c, s)| c * s).sum::<f64>() + self.d * e;
        for (i, (slot, b)) in scratch.iter_mut().zip(&self.b).enumerate() {
            let row = &self.a[i * n..(i + 1) * n];
            *slot = row.iter().zip(state.iter()).map(|(a, s)| a * s).sum::<f64>() + b * e;
        }
        state.copy_from_slice(&scratch[..n]);
        out
    }
}

/// Controllable canonical form of a proper controller.
pub fn realize_controller(controller: &TransferFunction) -> Result<StateSpaceRealization> {
    let den = controller.denominator();
    let lead = den[0];
    let den: Vec<f64> = den.iter().map(|v| v / lead).collect();
    let num: Vec<f64> = controller.padded_numerator().iter().map(|v| v / lead).collect();
    let n = den.len() - 1;

    let d = num[0];
    let mut a = vec![0.0; n * n];
    for j in 0..n {
        a[j] = -den[j + 1];
    }
    for i in 1..n {
        a[i * n + i - 1] = 1.0;
    }
    let mut b = vec![0.0; n];
    if n > 0 {
        b[0] = 1.0;
    }
    let c = (1..=n).map(|i| num[i] - d * den[i]).collect();
    Ok(StateSpaceRealization { a, b, c, d })
}
