use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_spf-lab");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    code: i32,
    stderr: String,
}

fn spf(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPF_LAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("spawn spf-lab");
    Run { code: out.status.code().unwrap_or(-1), stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(p)).unwrap()
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let r = spf(&args, &[]);
    assert_eq!(r.code, 0, "{cmd} failed: {}", r.stderr);
}

/// `(state, action, bin, dim) -> (re, im)` rows of field.csv.
fn field_rows(path: &Path) -> Vec<(usize, usize, usize, usize, f64, f64)> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (
                c[0].parse().unwrap(),
                c[1].parse().unwrap(),
                c[2].parse().unwrap(),
                c[3].parse().unwrap(),
                c[4].parse().unwrap(),
                c[5].parse().unwrap(),
            )
        })
        .collect()
}

const SINGLE_STATE: &str = r#"
[mdp]
n_states = 1
n_actions = 1
gamma = 0.5
transition = [1.0]
reward = [1.0]
"#;

const TINY_PENDULUM: &str = r#"
seed = 4

[env]
kind = "pendulum"
horizon = 20

[agent]
hidden = [8]
action_samples = 4

[spf]
l = 8
encoder_blocks = 1
encoder_growth = 4
predictor_hidden = [8]
projection_hidden = 8
projection_dim = 4
batch_size = 8

[freqloss]
k_lo = 1
k_hi = 1

[schedule]
total_steps = 60
random_steps = 20
pretrain_steps = 5
buffer_size = 100
eval_interval = 30
eval_episodes = 2
checkpoint_interval = 30
"#;

#[test]
fn three_cycle_has_period_three() {
    let tmp = TempDir::new().unwrap();
    run_ok("analyze-mdp", &configs().join("three_cycle.toml"), tmp.path(), &[]);
    let r = json(tmp.path().join("period_report.json"));
    assert_eq!(r["global_period"], 3);
    assert_eq!(r["empirical_period"], 3);
    let evo = read(tmp.path().join("evolution.csv"));
    assert!(evo.starts_with("step,p0,p1,p2\n"));
    let m = json(tmp.path().join("manifest.json"));
    assert_eq!(m["command"], "analyze-mdp");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn disjoint_cycles_give_lcm_period() {
    let tmp = TempDir::new().unwrap();
    run_ok("analyze-mdp", &configs().join("two_cycles.toml"), tmp.path(), &[]);
    let r = json(tmp.path().join("period_report.json"));
    assert_eq!(r["class_periods"], serde_json::json!([2, 3]));
    assert_eq!(r["global_period"], 6);
    assert_eq!(r["empirical_period"], 6);
}

#[test]
fn malformed_toml_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[mdp\nn_states = 3\n");
    let out = tmp.path().join("out");
    for cmd in ["analyze-mdp", "solve-dtft", "verify-bounds", "train", "recover"] {
        let r = spf(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        assert_eq!(r.code, 2, "{cmd}: {}", r.stderr);
        assert!(r.stderr.contains("line 1"), "{cmd}: {}", r.stderr);
    }
    assert!(!out.exists());
}

#[test]
fn semantic_config_error_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "g.toml", &SINGLE_STATE.replace("gamma = 0.5", "gamma = 1.5"));
    let r =
        spf(&["solve-dtft", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("mdp.gamma") && r.stderr.contains("line 5"), "{}", r.stderr);
}

#[test]
fn missing_config_exits_4() {
    let tmp = TempDir::new().unwrap();
    let r = spf(&["analyze-mdp", "--config", tmp.path().join("nope.toml").to_str().unwrap()], &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);
}

#[test]
fn single_state_bin_zero_is_geometric_sum() {
    let tmp = TempDir::new().unwrap();
    for method in ["fixed_point", "direct"] {
        let out = tmp.path().join(method);
        let body = format!("{SINGLE_STATE}\n[dtft]\nl = 8\nmethod = \"{method}\"\n");
        let cfg = write(tmp.path(), &format!("{method}.toml"), &body);
        run_ok("solve-dtft", &cfg, &out, &[]);
        let rows = field_rows(&out.join("field.csv"));
        // half storage: bins 0..=4
        assert_eq!(rows.len(), 5);
        let (_, _, bin, _, re, im) = rows[0];
        assert_eq!(bin, 0);
        assert!((re - 2.0).abs() < 1e-9 && im.abs() < 1e-12, "{method}: {re} {im}");
        for &(_, _, k, _, re, im) in &rows {
            let w = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            // 1 / (1 - γ e^{-jω})
            let (dr, di) = (1.0 - 0.5 * w.cos(), 0.5 * w.sin());
            let n = dr * dr + di * di;
            assert!((re - dr / n).abs() < 1e-9 && (im + di / n).abs() < 1e-9, "{method} bin {k}");
        }
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SINGLE_STATE}\n[dtft]\nmax_iter = 1\n");
    let cfg = write(tmp.path(), "cap.toml", &body);
    let out = tmp.path().join("o");
    let r = spf(&["solve-dtft", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    let c = json(out.join("convergence.json"));
    assert_eq!(c["converged"], false);
    assert_eq!(c["iterations"], 1);
    assert!(!json(out.join("manifest.json"))["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn three_cycle_field_matches_rollout() {
    let tmp = TempDir::new().unwrap();
    run_ok("solve-dtft", &configs().join("three_cycle.toml"), tmp.path(), &[]);
    let rows = field_rows(&tmp.path().join("field.csv"));
    let (gamma, l) = (0.9_f64, 16usize);
    assert_eq!(rows.len(), 3 * (l / 2 + 1) * 3);
    for (s, a, k, d, re, im) in rows {
        assert_eq!(a, 0);
        let w = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
        let (mut or, mut oi) = (0.0, 0.0);
        // n-th term is γⁿ φ(s_{n+1}) e^{-jωn}; the tail past 600 is below 1e-27
        let mut cur = s;
        for n in 0..600 {
            cur = (cur + 1) % 3;
            if cur == d {
                let g = gamma.powi(n);
                or += g * (w * n as f64).cos();
                oi -= g * (w * n as f64).sin();
            }
        }
        assert!((re - or).abs() < 1e-8 && (im - oi).abs() < 1e-8, "s{s} bin{k} d{d}: {re}+{im}j vs {or}+{oi}j");
    }
}

#[test]
fn identical_policies_have_slack_equal_to_rhs() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
[mdp]
n_states = 2
n_actions = 2
gamma = 0.9
transition = [0.5, 0.5, 0.1, 0.9, 0.7, 0.3, 0.2, 0.8]
reward = [1.0, -1.0]

[policy1]
kind = "deterministic"
actions = [0, 1]

[policy2]
kind = "deterministic"
actions = [0, 1]

[reward]
coefficients = [[0.0, 0.0], [1.0, -1.0]]
"#;
    let cfg = write(tmp.path(), "same.toml", body);
    run_ok("verify-bounds", &cfg, tmp.path(), &[]);
    let csv = read(tmp.path().join("verdicts.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("instance_id,theorem,lhs,rhs,slack,verdict"));
    let mut seen = 0;
    for l in lines {
        let c: Vec<&str> = l.split(',').collect();
        let (lhs, rhs, slack): (f64, f64, f64) = (c[2].parse().unwrap(), c[3].parse().unwrap(), c[4].parse().unwrap());
        assert!(lhs.abs() < 1e-12, "{l}");
        assert_eq!(slack, rhs - lhs);
        assert!(slack >= 0.0);
        seen += 1;
    }
    assert_eq!(seen, 2);
}

#[test]
fn suite_bounds_hold_and_periodic_is_inapplicable() {
    let tmp = TempDir::new().unwrap();
    run_ok("verify-bounds", &configs().join("bounds_suite.toml"), tmp.path(), &[]);
    let csv = read(tmp.path().join("verdicts.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().filter(|r| r[1] == "time_domain").count(), 100);
    assert!(rows.iter().all(|r| r[5] != "violated"));
    let periodic: Vec<_> =
        rows.iter().filter(|r| r[1] == "frequency_domain" && r[0].parse::<usize>().unwrap() >= 20).collect();
    assert_eq!(periodic.len(), 2);
    assert!(periodic.iter().all(|r| r[5] == "inapplicable"));
}

#[test]
fn zero_step_train_writes_headers_and_initial_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", &TINY_PENDULUM.replace("total_steps = 60", "total_steps = 0"));
    let out = tmp.path().join("o");
    run_ok("train", &cfg, &out, &[]);
    let m = read(out.join("metrics.csv"));
    assert_eq!(m.lines().count(), 1);
    assert!(m.starts_with("step,"));
    assert_eq!(read(out.join("eval.csv")).lines().count(), 1);
    assert!(out.join("checkpoints/final.json").exists() && out.join("checkpoints/final.bin").exists());
    let ck = json(out.join("checkpoints/final.json"));
    assert_eq!(ck["step"], 0);
    assert!(!out.join("checkpoints/step_00000000.json").exists());
}

fn cells(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn assert_csv_close(a: &str, b: &str, tol: f64) {
    let (a, b) = (cells(a), cells(b));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= tol, "{x} vs {y}"),
                _ => assert_eq!(x, y),
            }
        }
    }
}

#[test]
fn resumed_training_splices_onto_the_full_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", TINY_PENDULUM);
    let full = tmp.path().join("full");
    run_ok("train", &cfg, &full, &[]);
    assert!(full.join("checkpoints/step_00000030.json").exists());
    let resumed = tmp.path().join("resumed");
    let stem = full.join("checkpoints/step_00000030");
    run_ok("train", &cfg, &resumed, &["--resume", stem.to_str().unwrap()]);
    for f in ["metrics.csv", "agent.csv", "eval.csv"] {
        assert_csv_close(&read(full.join(f)), &read(resumed.join(f)), 1e-9);
    }
    assert_eq!(json(resumed.join("manifest.json"))["details"]["start_step"], 30);
}

#[test]
fn resume_with_missing_checkpoint_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", TINY_PENDULUM);
    let r = spf(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
            "--resume",
            "/nonexistent/ck",
        ],
        &[],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", TINY_PENDULUM);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("train", &cfg, &a, &[]);
    run_ok("train", &cfg, &b, &["--seed", "4"]);
    for f in ["metrics.csv", "agent.csv", "eval.csv", "checkpoints/final.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    run_ok("train", &cfg, &c, &["--seed", "5"]);
    assert_ne!(read(a.join("metrics.csv")), read(c.join("metrics.csv")));

    let (s1, s2) = (tmp.path().join("s1"), tmp.path().join("s2"));
    run_ok("solve-dtft", &configs().join("three_cycle.toml"), &s1, &[]);
    run_ok("solve-dtft", &configs().join("three_cycle.toml"), &s2, &[]);
    assert_eq!(read(s1.join("field.csv")), read(s2.join("field.csv")));
}

const SHORT_WALK: &str = r#"
seed = 2
gamma = 0.9

[env]
kind = "cycle_walk"
period = 5
autonomous = true
horizon = 50

[spf]
l = 4
encoder_blocks = 1
encoder_growth = 4
predictor_hidden = [8]
projection_hidden = 8
projection_dim = 4
batch_size = 8

[freqloss]
k_lo = 1
k_hi = 1

[schedule]
total_steps = 0
"#;

#[test]
fn exact_recovery_stays_within_the_aliasing_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "w.toml", &SHORT_WALK.replace("l = 4", "l = 16"));
    run_ok("recover", &cfg, tmp.path(), &[]);
    let m = json(tmp.path().join("manifest.json"));
    let bound = 0.9_f64.powi(16) / (1.0 - 0.9);
    assert!(m["warnings"].as_array().unwrap().is_empty());
    let csv = read(tmp.path().join("recovery.csv"));
    assert!(csv.starts_with("source,k,state,action,dim,true,recovered,abs_error\n"));
    let mut n = 0;
    for l in csv.lines().skip(1) {
        let c: Vec<&str> = l.split(',').collect();
        assert_eq!(c[0], "exact");
        let err: f64 = c[7].parse().unwrap();
        assert!(err <= bound + 1e-8, "{l}");
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn recovery_past_l_is_flagged_as_aliasing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "w.toml", SHORT_WALK);
    run_ok("recover", &cfg, tmp.path(), &["--k-max", "6"]);
    let warnings = json(tmp.path().join("manifest.json"))["warnings"].clone();
    assert!(warnings.as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("alias")), "{warnings}");
    let summary = read(tmp.path().join("recovery_summary.csv"));
    let flags: Vec<&str> = summary.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(flags, ["false", "false", "false", "false", "true", "true"]);
}

#[test]
fn recover_rejects_pendulum() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", TINY_PENDULUM);
    let r = spf(&["recover", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn thread_variable_is_validated() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("three_cycle.toml");
    let args = ["analyze-mdp", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()];
    assert_eq!(spf(&args, &[("SPF_LAB_THREADS", "0")]).code, 2);
    assert_eq!(spf(&args, &[("SPF_LAB_THREADS", "many")]).code, 2);
    assert_eq!(spf(&args, &[("SPF_LAB_THREADS", "1")]).code, 0);
}
