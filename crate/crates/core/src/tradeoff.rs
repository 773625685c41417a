//! Worst-case attacks and the stealthiness-distortion tradeoff.
//!
//! For an output spectrum `S_y`, the stealthiest attack achieving output
//! deviation power `c²D` shapes the deviation spectrum as
//!
//! ```text
//! S_n̂(ω) = ζ S_y(ω)² / (1 - ζ S_y(ω)),   0 < ζ < 1 / max S_y,
//! ```
//!
//! with `ζ` fixed by the power constraint. The dual problem fixes the KL
//! rate instead. `ζ` is the negated Lagrange multiplier of the power
//! constraint. The same allocation over the eigenvalues of a finite Toeplitz
//! covariance gives [`finite_horizon_min_kl`], which converges to the
//! spectral formula as the horizon grows.

use num_complex::Complex64;

use crate::divergence::{ensure_positive_reference, kl_rate, x_minus_log1p, DivergenceValue};
use crate::error::{Error, Result};
use crate::lti::SystemModel;
use crate::spectra::{integrate_spectrum, output_spectrum, toeplitz_covariance, FrequencyGrid, SpectrumSamples};

/// Largest Toeplitz horizon accepted by [`finite_horizon_min_kl`].
pub const MAX_ORACLE_HORIZON: usize = 8191;

const MAX_ITERATIONS: usize = 200;
/// Relative residual at which bisection stops early.
const EARLY_EXIT_TOL: f64 = 1e-13;
/// Relative residual a returned root must meet.
const ACCEPT_TOL: f64 = 1e-10;
const OVERFLOW: f64 = 1e300;

/// What the attacker fixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackTarget {
    /// Required state distortion `E[(x̂ - x)²] = D`.
    Distortion(f64),
    /// Allowed KL divergence rate `R` of the attacked output.
    StealthBudget(f64),
}

impl AttackTarget {
    pub fn value(&self) -> f64 {
        match *self {
            AttackTarget::Distortion(v) | AttackTarget::StealthBudget(v) => v,
        }
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            AttackTarget::Distortion(_) => TargetKind::Distortion,
            AttackTarget::StealthBudget(_) => TargetKind::StealthBudget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Distortion,
    StealthBudget,
}

impl TargetKind {
    pub fn with_value(self, value: f64) -> AttackTarget {
        match self {
            TargetKind::Distortion => AttackTarget::Distortion(value),
            TargetKind::StealthBudget => AttackTarget::StealthBudget(value),
        }
    }
}

/// One solved point of the tradeoff.
#[derive(Debug, Clone)]
pub struct TradeoffPoint {
    pub target: AttackTarget,
    /// State mean-square deviation `(1/2πc²) ∫ S_n̂`.
    pub distortion: f64,
    pub zeta: f64,
    pub kl_rate: DivergenceValue,
    /// Unattacked output spectrum.
    pub s_y: SpectrumSamples,
    /// Output deviation spectrum `S_n̂`.
    pub s_nhat: SpectrumSamples,
    /// Spectrum of the injected attack signal.
    pub s_n: SpectrumSamples,
}

/// `Σ ζλ²/(1 - ζλ)`, or `+∞` once any term overflows.
fn deviation_power(channels: &[f64], zeta: f64) -> f64 {
    let mut total = 0.0;
    for &l in channels {
        let term = zeta * l * l / (1.0 - zeta * l);
        if !(0.0..=OVERFLOW).contains(&term) {
            return f64::INFINITY;
        }
        total += term;
    }
    total
}

/// `Σ ½ {ζλ/(1 - ζλ) + ln(1 - ζλ)}`, the KL cost of the allocation at `ζ`.
fn allocation_kl(channels: &[f64], zeta: f64) -> f64 {
    let mut total = 0.0;
    for &l in channels {
        let q = zeta * l / (1.0 - zeta * l);
        if !(0.0..=OVERFLOW).contains(&q) {
            return f64::INFINITY;
        }
        total += 0.5 * x_minus_log1p(q);
    }
    total
}

/// Solves `f(ζ) = target` on `(0, upper)` for `f` increasing from `f(0) = 0`
/// to `+∞` at `upper`. Overflowing probes count as `+∞` and pull the upper
/// bracket inward.
fn solve_increasing(
    quantity: &'static str,
    upper: f64,
    target: f64,
    n: usize,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut hi = None;
    for gap in [1e-9, 1e-12, 1e-15] {
        let probe = upper * (1.0 - gap);
        let value = f(probe);
        if value >= target {
            hi = Some((probe, value));
            break;
        }
    }
    let Some((mut hi, mut f_hi)) = hi else {
        return Err(Error::BudgetUnreachable { budget: target, n });
    };
    let (mut lo, mut f_lo) = (0.0, 0.0);
    let mut best = (hi, (f_hi - target).abs());

    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = f(mid);
        if !value.is_finite() {
            hi = mid;
            f_hi = f64::INFINITY;
            continue;
        }
        if value < f_lo || value > f_hi {
            return Err(Error::BracketViolation {
                quantity,
                detail: format!("f({mid:e}) = {value:e} outside [f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}]"),
            });
        }
        let residual = (value - target).abs();
        if residual < best.1 {
            best = (mid, residual);
        }
        if residual <= EARLY_EXIT_TOL * target {
            break;
        }
        if value < target {
            lo = mid;
            f_lo = value;
        } else {
            hi = mid;
            f_hi = value;
        }
    }
    let relative = best.1 / target;
    if relative > ACCEPT_TOL {
        return Err(Error::NoConvergence { quantity, residual: relative });
    }
    Ok(best.0)
}

fn positive_target(field: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::invalid(field, format!("must be positive and finite, got {value}")));
    }
    Ok(())
}

/// ζ with `(1/2π) ∫ ζ S_y² / (1 - ζ S_y) dω = budget`, where `budget = c²D`.
pub fn solve_zeta_for_distortion(s_y: &SpectrumSamples, budget: f64) -> Result<f64> {
    positive_target("budget", budget)?;
    ensure_positive_reference(s_y)?;
    let values = s_y.values();
    let n = values.len();
    solve_increasing("zeta (distortion)", 1.0 / s_y.max(), budget, n, |z| {
        deviation_power(values, z) / n as f64
    })
}

/// ζ with `(1/2π) ∫ ½ {ζS_y/(1 - ζS_y) - ln[1/(1 - ζS_y)]} dω = R`.
pub fn solve_zeta_for_kl(s_y: &SpectrumSamples, stealth_budget: f64) -> Result<f64> {
    positive_target("stealth_budget", stealth_budget)?;
    ensure_positive_reference(s_y)?;
    let values = s_y.values();
    let n = values.len();
    solve_increasing("zeta (KL rate)", 1.0 / s_y.max(), stealth_budget, n, |z| {
        allocation_kl(values, z) / n as f64
    })
}

/// `S_n̂ = ζ S_y² / (1 - ζ S_y)`.
pub fn attack_deviation_spectrum(s_y: &SpectrumSamples, zeta: f64) -> Result<SpectrumSamples> {
    if !(zeta > 0.0) || !(zeta * s_y.max() < 1.0) {
        return Err(Error::invalid("zeta", format!("must satisfy 0 < zeta < 1/max S_y = {}, got {zeta}", 1.0 / s_y.max())));
    }
    SpectrumSamples::new(s_y.grid(), s_y.values().iter().map(|&s| zeta * s * s / (1.0 - zeta * s)).collect())
}

fn solve_point(
    target: AttackTarget,
    c: f64,
    s_y: &SpectrumSamples,
    response: &[Complex64],
) -> Result<TradeoffPoint> {
    let zeta = match target {
        AttackTarget::Distortion(d) => {
            positive_target("distortion", d)?;
            solve_zeta_for_distortion(s_y, c * c * d)?
        }
        AttackTarget::StealthBudget(r) => solve_zeta_for_kl(s_y, r)?,
    };
    let s_nhat = attack_deviation_spectrum(s_y, zeta)?;
    let grid = s_y.grid();
    let mut s_n = Vec::with_capacity(grid.len());
    for (bin, (g, &p)) in response.iter().zip(s_nhat.values()).enumerate() {
        let gain = g.norm_sqr();
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::UnboundedAttack { bin, omega: grid.omega(bin) });
        }
        s_n.push(p / gain);
    }
    let s_n = SpectrumSamples::new(grid, s_n)?;
    let kl = kl_rate(s_y, &s_nhat)?;
    let distortion = integrate_spectrum(&s_nhat) / (c * c);
    Ok(TradeoffPoint { target, distortion, zeta, kl_rate: kl, s_y: s_y.clone(), s_nhat, s_n })
}

/// Solves the worst-case stationary Gaussian attack for one target.
pub fn worst_case_attack(model: &SystemModel, target: AttackTarget, grid: &FrequencyGrid) -> Result<TradeoffPoint> {
    let s_y = output_spectrum(model, grid)?;
    let response = model.attack_response(grid);
    solve_point(target, model.plant().c(), &s_y, &response)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub target: f64,
    pub distortion: f64,
    pub zeta: f64,
    pub kl_rate: f64,
}

/// Tradeoff rows sorted by target; `(D, kl_min)` or `(R, D_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub kind: TargetKind,
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    /// `(independent, dependent)` pairs: `(D, kl_min)` or `(R, D_max)`.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| match self.kind {
                TargetKind::Distortion => (r.distortion, r.kl_rate),
                TargetKind::StealthBudget => (r.kl_rate, r.distortion),
            })
            .collect()
    }
}

/// One worst-case point per target.
pub fn tradeoff_points(
    model: &SystemModel,
    kind: TargetKind,
    targets: &[f64],
    grid: &FrequencyGrid,
) -> Result<Vec<TradeoffPoint>> {
    if targets.is_empty() {
        return Err(Error::invalid("targets", "at least one target is required"));
    }
    if let Some(w) = targets.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("targets", format!("must be strictly increasing, found {} then {}", w[0], w[1])));
    }
    let s_y = output_spectrum(model, grid)?;
    let response = model.attack_response(grid);
    let c = model.plant().c();
    targets
        .iter()
        .map(|&t| {
            solve_point(kind.with_value(t), c, &s_y, &response)
                .map_err(|e| Error::AtTarget { target: t, source: Box::new(e) })
        })
        .collect()
}

/// Tabulates the tradeoff over strictly increasing targets.
pub fn tradeoff_curve(
    model: &SystemModel,
    kind: TargetKind,
    targets: &[f64],
    grid: &FrequencyGrid,
) -> Result<CurveTable> {
    let points = tradeoff_points(model, kind, targets, grid)?;
    let table = CurveTable {
        kind,
        rows: points
            .iter()
            .map(|p| CurveRow {
                target: p.target.value(),
                distortion: p.distortion,
                zeta: p.zeta,
                kl_rate: p.kl_rate.nats(),
            })
            .collect(),
    };
    let pairs = table.pairs();
    if let Some(w) = pairs.windows(2).find(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
        return Err(Error::BracketViolation {
            quantity: "tradeoff curve",
            detail: format!("rows {:?} and {:?} are not strictly increasing", w[0], w[1]),
        });
    }
    Ok(table)
}

/// Water-filling of a deviation budget over parallel Gaussian channels.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillAllocation {
    pub zeta: f64,
    /// `N̂_i = ζλ_i² / (1 - ζλ_i)`.
    pub allocations: Vec<f64>,
    /// `Σ ½ [N̂_i/λ_i - ln(1 + N̂_i/λ_i)]`.
    pub kl_per_channel_sum: f64,
}

/// Minimizes `Σ ½[N̂_i/λ_i - ln(1 + N̂_i/λ_i)]` subject to `Σ N̂_i = budget`.
pub fn waterfill_parallel(lambdas: &[f64], budget: f64) -> Result<WaterfillAllocation> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "no channels"));
    }
    positive_target("budget", budget)?;
    if let Some((i, l)) = lambdas.iter().enumerate().find(|(_, l)| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("lambdas", format!("channel {i} has nonpositive variance {l}")));
    }
    let largest = lambdas.iter().cloned().fold(0.0, f64::max);
    let zeta = solve_increasing("zeta (water-filling)", 1.0 / largest, budget, lambdas.len(), |z| {
        deviation_power(lambdas, z)
    })?;
    let allocations = lambdas.iter().map(|&l| zeta * l * l / (1.0 - zeta * l)).collect();
    Ok(WaterfillAllocation { zeta, allocations, kl_per_channel_sum: allocation_kl(lambdas, zeta) })
}

/// Per-sample minimum KL over a block of `horizon_k + 1` samples.
///
/// Eigen-decomposes the Toeplitz covariance of `S_y`, water-fills the block
/// budget `(k+1)·budget` over the eigenvalues and returns the KL sum divided
/// by `k + 1`. Eigenvalues that are zero within round-off carry no
/// allocation.
pub fn finite_horizon_min_kl(s_y: &SpectrumSamples, budget: f64, horizon_k: usize) -> Result<f64> {
    if horizon_k > MAX_ORACLE_HORIZON {
        return Err(Error::invalid("horizon_k", format!("at most {MAX_ORACLE_HORIZON}, got {horizon_k}")));
    }
    positive_target("budget", budget)?;
    let m = horizon_k + 1;
    let lambdas = toeplitz_covariance(s_y, horizon_k)?.eigenvalues()?;
    let largest = lambdas.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-10 * largest.max(1.0);
    if let Some((index, &eigenvalue)) = lambdas.iter().enumerate().find(|(_, &l)| l < -tol) {
        return Err(Error::NotPositiveSemidefinite { eigenvalue, index });
    }
    let positive: Vec<f64> = lambdas.into_iter().filter(|&l| l > tol).collect();
    let allocation = waterfill_parallel(&positive, m as f64 * budget)?;
    Ok(allocation.kl_per_channel_sum / m as f64)
}
