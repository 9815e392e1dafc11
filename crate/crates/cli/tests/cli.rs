use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const REST: &str = r#"
[grid]
dim = 2
extent = [1.0, 1.0]
nodes = [7, 7]

[time]
T = 0.3
n = 3

[density]
kind = "constant"
alpha = 1.0
lambda_support = 2.0

[initial]
L = 1.0

[output]
probes = [[0.5, 0.5]]
stride = 1
"#;

const FORCED: &str = r#"
[grid]
dim = 1
extent = [1.0]
nodes = [33]
b = 1.0

[time]
T = 0.5
n = 10

[density]
kind = "gaussian"
beta = 1.0
alpha = 1.0
lambda_support = 2.0

[initial]
u0 = 0.0
L = 0.25

[sources]
h = "sin(2*pi*x)*sin(t)"

[output]
probes = [[0.25], [0.75]]
stride = 5
"#;

const INCOMPATIBLE: &str = r#"
[grid]
dim = 1
extent = [1.0]
nodes = [9]

[time]
T = 0.1
n = 2

[density]
kind = "constant"
lambda_support = 2.0

[initial]
L = 1.0

[sources]
h = 1.0
"#;

const LOOPS: &str = r#"
[density]
kind = "constant"
alpha = 1.0
lambda_support = 10.0

[loops]
sequence = [0.0, 1.0, 0.0, 1.0]
samples = 8
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hysterelax"));
    c.env_remove("HYSTERELAX_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn exec(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        if n == "timing.json" {
            continue;
        }
        let (pa, pb) = (a.join(&n), b.join(&n));
        if pa.is_dir() {
            same_tree(&pa, &pb);
        } else {
            assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap(), "{n:?} differs");
        }
    }
}

#[test]
fn rest_state_runs_clean() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rest.toml", REST);
    let out_dir = tmp.path().join("out");
    let out = exec(bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(&out_dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let probe = std::fs::read_to_string(out_dir.join("probe_0.csv")).unwrap();
    assert!(probe.starts_with("t,u_pl,u_pco,g_pl,g_pco\n"));
    for line in probe.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
    assert_eq!(std::fs::read_dir(out_dir.join("snapshots")).unwrap().count(), 4);
    let snap = std::fs::read_to_string(out_dir.join("snapshots/u_000003.csv")).unwrap();
    assert!(snap.starts_with("x,y,value\n"));
    let s = json(&out_dir.join("summary.json"));
    assert!(s["tau"].as_f64().unwrap() > 0.0);
    assert!(s["tau0"].is_number() && s["Ubar"].is_number());
    assert_eq!(s["monitors"]["energy_sum"].as_array().unwrap().len(), 3);
    assert!(json(&out_dir.join("timing.json"))["wall_time_s"].is_number());
}

#[test]
fn incompatible_start_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", INCOMPATIBLE);
    let out_dir = tmp.path().join("out");
    let out = exec(bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(&out_dir));
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.matches("violation node=").count(), 9);
    let c = json(&out_dir.join("compatibility.json"));
    assert_eq!(c["violations"].as_array().unwrap().len(), 9);
    assert!(!out_dir.join("summary.json").exists());
}

#[test]
fn parse_and_io_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let missing = exec(bin().args(["run", "--config", "/nonexistent/run.toml"]));
    assert_eq!(code(&missing), 1);
    let bad = write(tmp.path(), "bad.toml", "[grid]\ndim = ");
    assert_eq!(code(&exec(bin().args(["check", "--config"]).arg(&bad))), 1);
    let expr = write(tmp.path(), "expr.toml", &FORCED.replace("sin(2*pi*x)*sin(t)", "sin(2*pi*x"));
    assert_eq!(code(&exec(bin().args(["check", "--config"]).arg(&expr))), 1);
    assert_eq!(code(&exec(bin().arg("no-such-command"))), 1);
}

#[test]
fn time_step_above_tau0_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "big.toml", &FORCED.replace("L = 0.25", "L = 5.0"));
    let out = exec(bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(tmp.path().join("o")));
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let check = exec(bin().args(["check", "--config"]).arg(&cfg));
    assert_eq!(code(&check), 0);
    let rep: Value = serde_json::from_slice(&check.stdout).unwrap();
    assert_eq!(rep["tau_below_tau0"], false);
    assert!(!rep["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "forced.toml", FORCED);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&exec(bin().args(["--threads", "1", "run", "--config"]).arg(&cfg).arg("--out-dir").arg(&a))), 0);
    assert_eq!(
        code(&exec(bin().env("HYSTERELAX_THREADS", "3").args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(&b))),
        0
    );
    same_tree(&a, &b);
    // the emitted effective config reproduces the run
    let eff = a.join("effective-config.toml");
    assert_eq!(code(&exec(bin().args(["run", "--config"]).arg(&eff).arg("--out-dir").arg(&c))), 0);
    same_tree(&a, &c);
    let t = json(&b.join("timing.json"));
    assert_eq!(t["threads"], if cfg!(feature = "parallel") { 3 } else { 1 });
}

#[test]
fn thread_flag_beats_env() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rest.toml", REST);
    let dir = tmp.path().join("o");
    let out = exec(
        bin()
            .env("HYSTERELAX_THREADS", "4")
            .args(["--threads", "2", "run", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(&dir),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(json(&dir.join("timing.json"))["threads"], if cfg!(feature = "parallel") { 2 } else { 1 });
    let bad = exec(bin().env("HYSTERELAX_THREADS", "many").args(["run", "--config"]).arg(&cfg));
    assert_eq!(code(&bad), 1);
}

#[test]
fn check_reports_convexifier() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "forced.toml", FORCED);
    let out = exec(bin().args(["check", "--check-assembly", "--config"]).arg(&cfg));
    assert_eq!(code(&out), 0);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["compatible"], true);
    assert_eq!(rep["tau_below_tau0"], true);
    assert_eq!(rep["assembly"]["passed"], true);
    let cv = &rep["convexifier"];
    assert_eq!(cv["phi_slope"].as_f64().unwrap(), 2.0);
    assert!(cv["c"].as_f64().unwrap() > 0.0 && cv["c"].as_f64().unwrap() < 1.0);
    assert!(cv["convexity"]["beta_estimate"].as_f64().unwrap() > 0.0);

    let loops = write(tmp.path(), "loops.toml", &LOOPS.replace("\"constant\"", "\"gaussian\"\nbeta = 1.0"));
    let out = exec(bin().args(["check-convexify", "--u-max", "1.0", "--config"]).arg(&loops));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = rep["c"].as_f64().unwrap();
    assert!((c - 0.746_824_132_812_427).abs() < 1e-8);
}

#[test]
fn loops_trace_pi_remanence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "loops.toml", LOOPS);
    let dir = tmp.path().join("lp");
    let out = exec(bin().args(["loops", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.join("loops.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 25);
    assert!((rows[16][1] - 0.25).abs() < 1e-12);
    let s = json(&dir.join("loops.json"));
    assert_eq!(s["closed"], true);
    assert!(s["signed_area"].as_f64().unwrap() > 0.0);
    let flat = exec(bin().args(["loops", "--sequence", "0.5", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&flat), 0);
    assert_eq!(json(&dir.join("loops.json"))["points"], 1);
    let neg = exec(bin().args(["loops", "--sequence", "0,-1,1", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&neg), 0);
}

#[test]
fn refine_rest_state_has_zero_differences() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rest.toml", REST);
    let dir = tmp.path().join("rf");
    let out = exec(bin().args(["refine", "--levels", "3", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&out), 0);
    let rep = json(&dir.join("refine.json"));
    assert_eq!(rep["levels"].as_array().unwrap().len(), 3);
    for row in rep["diffs"].as_array().unwrap() {
        assert!(row.as_array().unwrap().iter().all(|v| v.as_f64().unwrap() == 0.0));
    }

    let cfg = write(tmp.path(), "forced.toml", FORCED);
    let out = exec(bin().args(["refine", "--levels", "3", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&out), 0);
    let rep = json(&dir.join("refine.json"));
    let d = rep["diffs"].as_array().unwrap();
    assert!(d[1][0].as_f64().unwrap() < d[0][0].as_f64().unwrap());
    assert!(rep["monitor_spread"].as_array().unwrap().iter().all(|s| s.as_f64().unwrap() < 3.0));
}

#[test]
fn check_assembly_flag_on_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rest.toml", REST);
    let dir = tmp.path().join("o");
    let out = exec(bin().args(["run", "--check-assembly", "--config"]).arg(&cfg).arg("--out-dir").arg(&dir));
    assert_eq!(code(&out), 0);
    assert_eq!(json(&dir.join("assembly.json"))["passed"], true);
}
