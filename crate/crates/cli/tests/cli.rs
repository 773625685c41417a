use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_stealthcurve");

fn deadbeat(targets: Value) -> Value {
    json!({
        "plant": {"a": 0.5, "b": 1.0, "c": 1.0, "sigma_w2": 1.0, "sigma_v2": 0.0},
        "controller": {"numerator": [0.5], "denominator": [1.0]},
        "targets": targets,
    })
}

fn ar1(targets: Value) -> Value {
    json!({
        "plant": {"a": 0.5, "b": 1.0, "c": 1.0, "sigma_w2": 0.75, "sigma_v2": 0.0},
        "targets": targets,
    })
}

struct Run {
    out: Output,
    dir: PathBuf,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().unwrap()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.out.stderr).into_owned()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn report(&self) -> Value {
        serde_json::from_str(&self.read("report.json")).unwrap()
    }

    /// Rows of a CSV as numbers, header checked.
    fn csv(&self, name: &str, header: &str) -> Vec<Vec<f64>> {
        let text = self.read(name);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), header);
        lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
    }

    /// First line of stderr parsed as the structured error.
    fn error(&self) -> Value {
        let line = self.stderr().lines().next().unwrap().to_string();
        serde_json::from_str::<Value>(&line).unwrap()["error"].clone()
    }
}

fn write_config(tmp: &TempDir, name: &str, config: &Value) -> PathBuf {
    let path = tmp.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run_with(tmp: &TempDir, cmd: &str, config: &Path, out: &str, extra: &[&str], env: Option<&str>) -> Run {
    let dir = tmp.path().join(out);
    let mut c = Command::new(BIN);
    c.arg(cmd).arg("--config").arg(config).arg("--out").arg(&dir).args(extra);
    match env {
        Some(v) => c.env("STEALTHCURVE_GRID_N", v),
        None => c.env_remove("STEALTHCURVE_GRID_N"),
    };
    Run { out: c.output().unwrap(), dir }
}

fn run(tmp: &TempDir, cmd: &str, config: &Value, out: &str) -> Run {
    let path = write_config(tmp, &format!("{out}.json"), config);
    run_with(tmp, cmd, &path, out, &[], None)
}

#[test]
fn deadbeat_curve_row_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "tradeoff", &deadbeat(json!({"distortion": [1.0]})), "out");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rows = r.csv("curve.csv", "target,D,zeta,kl_rate");
    assert_eq!(rows.len(), 1);
    let [t, d, zeta, kl] = rows[0][..] else { panic!() };
    assert_eq!(t, 1.0);
    assert!((d - 1.0).abs() < 1e-10);
    assert!((zeta - 0.5).abs() < 1e-10);
    assert!((kl - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-10);

    let spectrum = r.csv("spectrum_0.csv", "omega,S_y,S_nhat,S_n");
    assert_eq!(spectrum.len(), 1024);
    assert!(spectrum.iter().all(|row| (row[1] - 1.0).abs() < 1e-12 && (row[3] - 1.0).abs() < 1e-9));
}

#[test]
fn stealth_budget_recovers_distortion() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "tradeoff", &deadbeat(json!({"stealth_budget": [0.5 * (1.0 - 2f64.ln())]})), "out");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rows = r.csv("curve.csv", "target,D,zeta,kl_rate");
    assert!((rows[0][1] - 1.0).abs() <= 1e-6);
}

#[test]
fn csv_cells_carry_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "tradeoff", &ar1(json!({"distortion": [0.3]})), "out");
    let text = r.read("curve.csv");
    for cell in text.lines().nth(1).unwrap().split(',') {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.len(), 18, "{cell}");
    }
}

#[test]
fn unstable_open_loop_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let mut config = ar1(json!({"distortion": [1.0]}));
    config["plant"]["a"] = json!(1.0);
    let r = run(&tmp, "tradeoff", &config, "out");
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("stability invariant"), "{}", r.stderr());
    assert_eq!(r.error()["kind"], "validation");
    assert_eq!(r.error()["field"], "plant.a");
}

#[test]
fn zero_distortion_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "synthesize", &deadbeat(json!({"distortion": [0.0]})), "out");
    assert_eq!(r.code(), 1);
    assert_eq!(r.error()["field"], "targets.distortion");
}

#[test]
fn malformed_configs_exit_with_validation_code() {
    let tmp = TempDir::new().unwrap();
    let mut unknown = ar1(json!({"distortion": [1.0]}));
    unknown["plant"]["gain"] = json!(2.0);
    assert_eq!(run(&tmp, "tradeoff", &unknown, "a").code(), 1);

    let both = ar1(json!({"distortion": [1.0], "stealth_budget": [0.1]}));
    assert_eq!(run(&tmp, "tradeoff", &both, "b").code(), 1);

    let decreasing = ar1(json!({"distortion": [2.0, 1.0]}));
    assert_eq!(run(&tmp, "tradeoff", &decreasing, "c").code(), 1);

    let mut missing_table = ar1(json!({"distortion": [1.0]}));
    missing_table["input_spectrum"] = json!({"kind": "tabulated", "path": "nowhere.csv"});
    assert_eq!(run(&tmp, "tradeoff", &missing_table, "d").code(), 1);

    let r = run_with(&tmp, "tradeoff", &tmp.path().join("absent.json"), "e", &[], None);
    assert_eq!(r.code(), 1);
    let r = Command::new(BIN).arg("tradeoff").output().unwrap();
    assert_eq!(r.status.code(), Some(1));
    let r = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn unresolvable_target_reports_structured_solver_error() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "tradeoff", &ar1(json!({"distortion": [1.0, 1e12]})), "out");
    assert_eq!(r.code(), 2, "{}", r.stderr());
    assert_eq!(r.error()["kind"], "solver");
    let report = r.report();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["status"], "ok");
    assert_eq!(rows[1]["status"], "error");
    assert_eq!(rows[1]["error"]["target"], 1e12);
    assert_eq!(r.csv("curve.csv", "target,D,zeta,kl_rate").len(), 1);
}

#[test]
fn config_echo_round_trips() {
    let tmp = TempDir::new().unwrap();
    let mut config = ar1(json!({"stealth_budget": [0.01, 0.1]}));
    config["input_spectrum"] = json!({"kind": "ar1", "pole": 0.3, "innovation_variance": 0.2});
    config["simulation"] = json!({"horizon": 4096, "seed": 3});
    let first = run(&tmp, "tradeoff", &config, "first");
    assert_eq!(first.code(), 0, "{}", first.stderr());
    let echo = first.report()["config"].clone();

    let path = write_config(&tmp, "echo.json", &echo);
    let second = run_with(&tmp, "tradeoff", &path, "first", &[], None);
    assert_eq!(second.code(), 0, "{}", second.stderr());
    assert_eq!(second.report()["config"], echo);
    assert_eq!(echo["grid_n"], 1024);
}

#[test]
fn grid_size_precedence_is_flag_then_env_then_config() {
    let tmp = TempDir::new().unwrap();
    let mut config = ar1(json!({"distortion": [1.0]}));
    config["grid_n"] = json!(128);
    let path = write_config(&tmp, "c.json", &config);
    let rows = |r: &Run| r.csv("spectrum_0.csv", "omega,S_y,S_nhat,S_n").len();

    let r = run_with(&tmp, "tradeoff", &path, "cfg", &[], None);
    assert_eq!(rows(&r), 128);
    let r = run_with(&tmp, "tradeoff", &path, "env", &[], Some("256"));
    assert_eq!(rows(&r), 256);
    let r = run_with(&tmp, "tradeoff", &path, "flag", &["--grid-n", "64"], Some("256"));
    assert_eq!(rows(&r), 64);
    let r = run_with(&tmp, "tradeoff", &path, "bad", &[], Some("lots"));
    assert_eq!(r.code(), 1);
}

#[test]
fn synthesize_is_deterministic_and_has_target_variance() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(&tmp, "c.json", &deadbeat(json!({"distortion": [1.0]})));
    let a = run_with(&tmp, "synthesize", &path, "a", &["--seed", "7"], None);
    let b = run_with(&tmp, "synthesize", &path, "b", &["--seed", "7"], None);
    assert_eq!(a.code(), 0, "{}", a.stderr());
    assert_eq!(a.read("attack_series.csv"), b.read("attack_series.csv"));
    assert_eq!(a.read("attack_spectrum.csv"), b.read("attack_spectrum.csv"));

    let series: Vec<f64> = a.csv("attack_series.csv", "k,n_k").iter().map(|r| r[1]).collect();
    assert_eq!(series.len(), 1 << 16);
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / series.len() as f64;
    assert!((var - 1.0).abs() <= 0.02, "variance {var}");

    let c = run_with(&tmp, "synthesize", &path, "c", &["--seed", "8"], None);
    assert_ne!(a.read("attack_series.csv"), c.read("attack_series.csv"));
}

#[test]
fn tool_output_spectra_load_as_tabulated_input() {
    let tmp = TempDir::new().unwrap();
    let mut source = ar1(json!({"distortion": [1.0]}));
    source["grid_n"] = json!(256);
    let s = run(&tmp, "synthesize", &source, "src");
    assert_eq!(s.code(), 0, "{}", s.stderr());
    let t = run(&tmp, "tradeoff", &source, "tr");
    assert_eq!(t.code(), 0);

    let mut from_attack = ar1(json!({"distortion": [0.5]}));
    from_attack["grid_n"] = json!(256);
    from_attack["input_spectrum"] = json!({"kind": "tabulated", "path": s.dir.join("attack_spectrum.csv")});
    let r = run(&tmp, "tradeoff", &from_attack, "a");
    assert_eq!(r.code(), 0, "{}", r.stderr());

    let mut from_spectrum = from_attack.clone();
    from_spectrum["input_spectrum"] = json!({"kind": "tabulated", "path": t.dir.join("spectrum_0.csv"), "column": "S_nhat"});
    let r = run(&tmp, "tradeoff", &from_spectrum, "b");
    assert_eq!(r.code(), 0, "{}", r.stderr());

    // relative paths resolve against the config file
    std::fs::copy(t.dir.join("spectrum_0.csv"), tmp.path().join("local.csv")).unwrap();
    from_spectrum["input_spectrum"] = json!({"kind": "tabulated", "path": "local.csv", "column": "S_y"});
    let r = run(&tmp, "tradeoff", &from_spectrum, "c");
    assert_eq!(r.code(), 0, "{}", r.stderr());

    let r = run_with(&tmp, "tradeoff", &tmp.path().join("c.json"), "d", &["--grid-n", "512"], None);
    assert_eq!(r.code(), 1, "grid mismatch must be rejected");
}

#[test]
fn verify_white_oracle_is_exact() {
    let tmp = TempDir::new().unwrap();
    let mut config = json!({
        "plant": {"a": 0.0, "b": 1.0, "c": 1.0, "sigma_w2": 1.0, "sigma_v2": 0.0},
        "targets": {"distortion": [1.0]},
        "oracle": {"enabled": true, "horizons": [63], "tolerance": 1e-12},
    });
    let r = run(&tmp, "verify", &config, "white");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rows = r.csv("oracle.csv", "target,k,oracle_kl,integral_kl,rel_error");
    assert!(rows[0][4] <= 1e-12);

    config["plant"]["a"] = json!(0.5);
    config["plant"]["sigma_w2"] = json!(0.75);
    let r = run(&tmp, "verify", &config, "tight");
    assert_eq!(r.code(), 2, "AR(1) misses a 1e-12 tolerance at k=63");
    assert_eq!(r.error()["kind"], "tolerance");
    assert_eq!(r.report()["oracle"][0]["passed"], false);
}

#[test]
fn verify_ar1_oracle_and_monte_carlo() {
    let tmp = TempDir::new().unwrap();
    let mut config = ar1(json!({"distortion": [1.0]}));
    config["oracle"] = json!({"enabled": true, "horizons": [511]});
    config["simulation"] = json!({"enabled": true, "horizon": 1 << 20, "seed": 11});
    let r = run(&tmp, "verify", &config, "out");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let oracle = r.csv("oracle.csv", "target,k,oracle_kl,integral_kl,rel_error");
    assert!(oracle[0][4] <= 0.01);
    let mc = r.csv("monte_carlo.csv", "target,empirical_D,theoretical_D,empirical_kl_rate,theoretical_kl_rate");
    assert!((mc[0][1] - 1.0).abs() <= 0.03);
    assert!((mc[0][3] - mc[0][4]).abs() <= 0.1 * mc[0][4]);
}

#[test]
fn verify_needs_a_check_enabled() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&tmp, "verify", &ar1(json!({"distortion": [1.0]})), "out").code(), 1);
    let mut config = ar1(json!({"distortion": [1.0]}));
    config["oracle"] = json!({"enabled": true, "horizons": [600]});
    assert_eq!(run(&tmp, "verify", &config, "big").code(), 1, "k + 1 must not exceed grid_n / 2");
}
