use serde::{Deserialize, Serialize};
use stealthcurve::{
    estimate_distortion, finite_horizon_min_kl, kl_rate, output_spectrum, simulate, synthesize_colored_gaussian,
    welch_estimate, worst_case_attack, FrequencyGrid, SpectrumSamples, SystemModel, TargetKind, TradeoffPoint,
};

use crate::config::RunConfig;
use crate::error::{CliError, ErrorInfo};
use crate::output::{fmt, write_json, Csv};

/// Largest Welch segment used for the Monte Carlo KL estimate.
const MAX_WELCH_SEGMENT: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub rows: Vec<TargetRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle: Vec<OracleRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monte_carlo: Vec<MonteCarloRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub target: f64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok { distortion: f64, zeta: f64, kl_rate: f64 },
    Error { error: ErrorInfo },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub target: f64,
    pub k: usize,
    pub oracle_kl: f64,
    pub integral_kl: f64,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub target: f64,
    pub empirical_d: f64,
    pub theoretical_d: f64,
    pub empirical_kl_rate: f64,
    pub theoretical_kl_rate: f64,
    pub passed: bool,
}

struct Session {
    config: RunConfig,
    model: SystemModel,
    grid: FrequencyGrid,
    report: RunReport,
}

impl Session {
    fn new(command: &str, config: RunConfig) -> Result<Self, CliError> {
        let model = config.model()?;
        let grid = config.grid()?;
        let report = RunReport {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            rows: Vec::new(),
            oracle: Vec::new(),
            monte_carlo: Vec::new(),
            files: Vec::new(),
        };
        Ok(Session { config, model, grid, report })
    }

    /// Solves every target, recording failures as structured rows.
    fn solve_all(&mut self) -> Vec<Option<TradeoffPoint>> {
        let kind = self.config.targets.kind();
        let mut points = Vec::new();
        for &t in self.config.targets.values() {
            match worst_case_attack(&self.model, kind.with_value(t), &self.grid) {
                Ok(p) => {
                    self.report.rows.push(TargetRow {
                        target: t,
                        outcome: Outcome::Ok { distortion: p.distortion, zeta: p.zeta, kl_rate: p.kl_rate.nats() },
                    });
                    points.push(Some(p));
                }
                Err(e) => {
                    let mut info = CliError::from_core("target", e).info();
                    info.target = Some(t);
                    self.report.rows.push(TargetRow { target: t, outcome: Outcome::Error { error: info } });
                    points.push(None);
                }
            }
        }
        points
    }

    fn write_csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        csv.write(&self.config.out_dir().join(name))?;
        self.report.files.push(name.to_string());
        Ok(())
    }

    fn finish(self) -> Result<RunReport, CliError> {
        write_json(&self.config.out_dir().join("report.json"), &self.report)?;
        Ok(self.report)
    }
}

fn failed_targets(points: &[Option<TradeoffPoint>]) -> Result<(), CliError> {
    let failed = points.iter().filter(|p| p.is_none()).count();
    if failed > 0 {
        return Err(CliError::TargetsFailed { failed, total: points.len() });
    }
    Ok(())
}

pub fn tradeoff(config: RunConfig) -> Result<RunReport, CliError> {
    let mut s = Session::new("tradeoff", config)?;
    let points = s.solve_all();

    let mut curve = Csv::new(&["target", "D", "zeta", "kl_rate"]);
    for p in points.iter().flatten() {
        curve.row([fmt(p.target.value()), fmt(p.distortion), fmt(p.zeta), fmt(p.kl_rate.nats())]);
    }
    s.write_csv("curve.csv", &curve)?;
    for (i, p) in points.iter().enumerate() {
        let Some(p) = p else { continue };
        let mut table = Csv::new(&["omega", "S_y", "S_nhat", "S_n"]);
        for (j, w) in s.grid.points().enumerate() {
            table.row([fmt(w), fmt(p.s_y.values()[j]), fmt(p.s_nhat.values()[j]), fmt(p.s_n.values()[j])]);
        }
        s.write_csv(&format!("spectrum_{i}.csv"), &table)?;
    }

    // the sweep must be increasing in both columns
    let dependent: Vec<f64> = points
        .iter()
        .flatten()
        .map(|p| match p.target.kind() {
            TargetKind::Distortion => p.kl_rate.nats(),
            TargetKind::StealthBudget => p.distortion,
        })
        .collect();
    let monotone = dependent.windows(2).all(|w| w[1] > w[0]);
    let report = s.finish()?;
    failed_targets(&points)?;
    if !monotone {
        return Err(CliError::from_core(
            "curve",
            stealthcurve::Error::BracketViolation { quantity: "tradeoff curve", detail: "dependent column is not strictly increasing".into() },
        ));
    }
    Ok(report)
}

/// Samples of `s` on the coarser grid `coarse`, whose points are a subset.
fn decimate(s: &SpectrumSamples, coarse: FrequencyGrid) -> SpectrumSamples {
    let step = s.grid().len() / coarse.len();
    let values = s.values().iter().step_by(step).copied().collect();
    SpectrumSamples::new(coarse, values).expect("decimated spectrum stays valid")
}

fn synthesize_exact(s: &SpectrumSamples, length: usize, seed: u64) -> Result<Vec<f64>, CliError> {
    let n = s.grid().len();
    let mut series =
        synthesize_colored_gaussian(s, length.div_ceil(n) * n, seed).map_err(|e| CliError::from_core("synthesis", e))?;
    series.truncate(length);
    Ok(series)
}

pub fn verify(config: RunConfig) -> Result<RunReport, CliError> {
    if !config.oracle.enabled && !config.simulation.enabled {
        return Err(CliError::validation("oracle.enabled", "verify needs the oracle or the simulation block enabled"));
    }
    let mut s = Session::new("verify", config)?;
    let points = s.solve_all();
    let c2 = s.model.plant().c().powi(2);
    let mut failed = 0;
    let mut total = 0;

    if s.config.oracle.enabled {
        let mut csv = Csv::new(&["target", "k", "oracle_kl", "integral_kl", "rel_error"]);
        for p in points.iter().flatten() {
            let integral = p.kl_rate.nats();
            for &k in &s.config.oracle.horizons {
                let oracle = finite_horizon_min_kl(&p.s_y, c2 * p.distortion, k)
                    .map_err(|e| CliError::from_core("oracle", stealthcurve::Error::AtTarget { target: p.target.value(), source: Box::new(e) }))?;
                let rel_error = (oracle - integral).abs() / integral;
                let passed = rel_error <= s.config.oracle.tolerance;
                total += 1;
                failed += usize::from(!passed);
                csv.row([fmt(p.target.value()), k.to_string(), fmt(oracle), fmt(integral), fmt(rel_error)]);
                s.report.oracle.push(OracleRow { target: p.target.value(), k, oracle_kl: oracle, integral_kl: integral, rel_error, passed });
            }
        }
        s.write_csv("oracle.csv", &csv)?;
    }

    if s.config.simulation.enabled {
        let sim = s.config.simulation.clone();
        let segment = s.grid.len().min(MAX_WELCH_SEGMENT);
        let welch_grid = FrequencyGrid::new(segment).expect("power of two");
        let s_y_coarse = decimate(&output_spectrum(&s.model, &s.grid).map_err(|e| CliError::from_core("model", e))?, welch_grid);
        let mut csv = Csv::new(&["target", "empirical_D", "theoretical_D", "empirical_kl_rate", "theoretical_kl_rate"]);
        for p in points.iter().flatten() {
            let attack = synthesize_exact(&p.s_n, sim.horizon, sim.seed)?;
            let run = simulate(&s.model, Some(&attack), sim.horizon, sim.seed).map_err(|e| CliError::from_core("simulation", e))?;
            let empirical_d = estimate_distortion(&run).state;
            let empirical_kl = if sim.horizon >= 2 * segment {
                let est = welch_estimate(&run.output_deviation(), segment, 0.5, &welch_grid)
                    .map_err(|e| CliError::from_core("simulation", e))?;
                kl_rate(&s_y_coarse, &est).map_err(|e| CliError::from_core("simulation", e))?.nats()
            } else {
                f64::NAN
            };
            let (d, kl) = (p.distortion, p.kl_rate.nats());
            let passed = (empirical_d - d).abs() <= sim.distortion_tolerance * d
                && (empirical_kl - kl).abs() <= sim.kl_tolerance * kl;
            total += 1;
            failed += usize::from(!passed);
            csv.row([fmt(p.target.value()), fmt(empirical_d), fmt(d), fmt(empirical_kl), fmt(kl)]);
            s.report.monte_carlo.push(MonteCarloRow {
                target: p.target.value(),
                empirical_d,
                theoretical_d: d,
                empirical_kl_rate: empirical_kl,
                theoretical_kl_rate: kl,
                passed,
            });
        }
        s.write_csv("monte_carlo.csv", &csv)?;
    }

    let report = s.finish()?;
    failed_targets(&points)?;
    if failed > 0 {
        return Err(CliError::VerifyFailed { failed, total });
    }
    Ok(report)
}

pub fn synthesize(config: RunConfig) -> Result<RunReport, CliError> {
    let count = config.targets.values().len();
    if count != 1 {
        return Err(CliError::validation("targets", format!("synthesize takes exactly one target, got {count}")));
    }
    let mut s = Session::new("synthesize", config)?;
    let points = s.solve_all();
    let Some(p) = points[0].clone() else {
        s.finish()?;
        return Err(CliError::TargetsFailed { failed: 1, total: 1 });
    };
    let series = synthesize_exact(&p.s_n, s.config.simulation.horizon, s.config.simulation.seed)?;

    let mut csv = Csv::new(&["k", "n_k"]);
    for (k, v) in series.iter().enumerate() {
        csv.row([k.to_string(), fmt(*v)]);
    }
    s.write_csv("attack_series.csv", &csv)?;
    let mut table = Csv::new(&["omega", "value"]);
    for (w, v) in s.grid.points().zip(p.s_n.values()) {
        table.row([fmt(w), fmt(*v)]);
    }
    s.write_csv("attack_spectrum.csv", &table)?;
    s.finish()
}
