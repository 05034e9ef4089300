use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PATH_BLOCK: &str = r#"
[path]
family = "length"
n = 12
gamma = 0.9
epsilon_mix = 0.05
c0 = 3.0
c1 = 3.0
sigma = 2.0
weights0 = [0.8, 1.0, 0.4]
weights1 = [1.6, 2.0, 0.8]

[geometry]
grid = 21
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn htmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htmdp"))
        .args(args)
        .env_remove("HTMDP_THREADS")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = htmdp(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &format!("{PATH_BLOCK}\n[scheduler]\neta_zero = 0.1\n"),
    );
    let out = htmdp(&[
        "certify",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eta_zero"), "{err}");
}

#[test]
fn invalid_values_name_their_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &PATH_BLOCK.replace("gamma = 0.9", "gamma = 1.5"),
    );
    let out = htmdp(&[
        "certify",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[path]"));
}

#[test]
fn missing_config_and_bad_thread_count_fail() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        htmdp(&["certify", "--config", s(&missing)]).status.code(),
        Some(1)
    );
    let cfg = write_config(dir.path(), "ok.toml", PATH_BLOCK);
    let out = Command::new(env!("CARGO_BIN_EXE_htmdp"))
        .args([
            "certify",
            "--config",
            s(&cfg),
            "--out",
            s(&dir.path().join("o")),
        ])
        .env("HTMDP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stationary_certify_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/stationary.toml");
    let o = dir.path().join("o");
    run_ok(&["certify", "--config", cfg, "--out", s(&o)]);
    assert_eq!(
        header(&o.join("certify_pairs.csv")),
        "tau0,tau1,true_drift,bound,pl_term,curv_term,phi_term,ratio"
    );
    assert_eq!(
        header(&o.join("geometry.csv")),
        "tau,gap,speed_density,curvature_density,pl_density,curv_density,dr_inf,dp_w1,ddr_inf,ddp_w1,in_kink_window"
    );
    let rows = csv_rows(&o.join("certify_pairs.csv"));
    assert_eq!(rows.len(), 51 * 50 / 2);
    for r in &rows {
        for k in 2..7 {
            assert_eq!(&r[k], "0.0", "{r:?}");
        }
        assert_eq!(&r[7], "");
    }
    let summary = json(&o.join("certify_summary.json"));
    assert_eq!(summary["violations"], 0);
    assert_eq!(summary["pairs"], 1275);
    for k in ["PL", "Curv", "Phi"] {
        assert_eq!(summary["geometry"][k], 0.0, "{k}");
    }
    let pairs = json(&o.join("certify_pairs.json"));
    assert_eq!(pairs.as_array().unwrap().len(), 1275);
    assert!(pairs[0]["ratio"].is_null());
}

#[test]
fn certify_length_path_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", PATH_BLOCK);
    let o = dir.path().join("o");
    let out = run_ok(&[
        "certify",
        "--config",
        s(&cfg),
        "--out",
        s(&o),
        "--format",
        "csv",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violations"));
    assert!(o.join("certify_pairs.csv").exists());
    assert!(!o.join("certify_pairs.json").exists());
    for r in csv_rows(&o.join("certify_pairs.csv")) {
        let (drift, bound): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!(drift <= bound);
    }
}

#[test]
fn tubes_schema_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PATH_BLOCK}\n[tubes]\ntau0 = [0.1, 0.5]\neps = [0.05, 1.0]\n");
    let cfg = write_config(dir.path(), "t.toml", &body);
    let o = dir.path().join("o");
    run_ok(&["tubes", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(
        header(&o.join("tubes.csv")),
        "tau0,eps,order,status,lo,hi,component_lo,component_hi,checked,violations,max_deviation,gap_tau0,safe_lo,safe_hi,warning"
    );
    let rows = csv_rows(&o.join("tubes.csv"));
    assert_eq!(rows.len(), 8);
    let orders: Vec<&str> = rows.iter().map(|r| r.get(2).unwrap()).collect();
    assert_eq!(orders, ["first", "second"].repeat(4));
    let summary = json(&o.join("tubes_summary.json"));
    assert_eq!(summary["rows"], 8);
    assert_eq!(summary["coverage_violations"], 0);
}

#[test]
fn tubes_without_sweep_block_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", PATH_BLOCK);
    let out = htmdp(&[
        "tubes",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[tubes]"));
}

#[test]
fn gen_path_rows_are_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PATH_BLOCK}\n[snapshot]\npoints = 3\n");
    let cfg = write_config(dir.path(), "g.toml", &body);
    let o = dir.path().join("o");
    run_ok(&["gen-path", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(
        header(&o.join("path_snapshot.csv")),
        "tau,s,a,reward,s_next,prob"
    );
    let mut mass = std::collections::BTreeMap::<(String, String, String), f64>::new();
    for r in csv_rows(&o.join("path_snapshot.csv")) {
        *mass
            .entry((r[0].to_string(), r[1].to_string(), r[2].to_string()))
            .or_default() += r[5].parse::<f64>().unwrap();
    }
    assert_eq!(mass.len(), 3 * 12 * 3);
    assert!(mass.values().all(|m| (m - 1.0).abs() < 1e-12));
}

fn agent_block(steps: u64) -> String {
    format!("\n[agent]\nT = {steps}\nseeds = 2\n\n[agent.process]\nkind = \"linear_ramp\"\ntau0 = 0.0\ntau1 = 1.0\n")
}

#[test]
fn runs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        &format!("{PATH_BLOCK}{}", agent_block(300)),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&[
        "run",
        "--mode",
        "ht-rl",
        "--config",
        s(&cfg),
        "--out",
        s(&a),
    ]);
    run_ok(&[
        "run",
        "--mode",
        "ht-rl",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
    ]);
    for f in [
        "trace_ht-rl_seed0.csv",
        "trace_ht-rl_seed1.csv",
        "trace_ht-rl_seed0.json",
        "summary_ht-rl.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        header(&a.join("trace_ht-rl_seed0.csv")),
        "step,tau,e_t,regret_inc,geo_load,eta,nu,lambda,depth,budget,return"
    );
    assert_eq!(csv_rows(&a.join("trace_ht-rl_seed0.csv")).len(), 300);
    let summary = json(&a.join("summary_ht-rl.json"));
    assert_eq!(summary["mode"], "ht-rl");
    assert_eq!(summary["steps"], 300);
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    for key in [
        "cumulative_regret",
        "auc",
        "final_return",
        "final_tracking_error",
    ] {
        for field in ["median", "q1", "q3", "iqr", "values"] {
            assert!(!summary[key][field].is_null(), "{key}.{field}");
        }
    }
}

#[test]
fn seeds_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        &format!("{PATH_BLOCK}{}", agent_block(100)),
    );
    let o = dir.path().join("o");
    run_ok(&[
        "run",
        "--mode",
        "static-rl",
        "--config",
        s(&cfg),
        "--out",
        s(&o),
        "--seeds",
        "3",
    ]);
    assert!(o.join("trace_static-rl_seed2.csv").exists());
    assert!(!o.join("trace_static-rl_seed3.csv").exists());
}

#[test]
fn compare_matches_static_mcts_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        &format!("{PATH_BLOCK}{}", agent_block(120)),
    );
    let o = dir.path().join("o");
    run_ok(&[
        "run",
        "--mode",
        "compare",
        "--config",
        s(&cfg),
        "--out",
        s(&o),
        "--format",
        "csv",
    ]);
    assert_eq!(
        header(&o.join("comparison.csv")),
        "seed,ht_rl,static_rl,ht_mcts,static_mcts,ht_mcts_budget,static_mcts_budget"
    );
    for r in csv_rows(&o.join("comparison.csv")) {
        assert_eq!(&r[5], &r[6]);
    }
    let summary = json(&o.join("comparison_summary.json"));
    assert_eq!(summary["mcts_budgets_equal"], true);
    for m in ["ht-rl", "static-rl", "ht-mcts", "static-mcts"] {
        assert!(o.join(format!("summary_{m}.json")).exists());
        assert!(o.join(format!("trace_{m}_seed1.csv")).exists());
    }
}

#[test]
fn infinite_hysteresis_never_updates() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{PATH_BLOCK}{}\n[stability]\nH = [10, 20]\ndelta_hys = [inf]\n",
        agent_block(200)
    );
    let cfg = write_config(dir.path(), "s.toml", &body);
    let o = dir.path().join("o");
    run_ok(&["scheduler-stability", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(
        header(&o.join("stability.csv")),
        "H,delta_hys,seed,updates,large_change_fraction,second_moment,chatter_bound,var_eta,var_nu,var_lambda,var_depth,var_budget,variation_ok,rm_comparable_fraction"
    );
    let rows = csv_rows(&o.join("stability.csv"));
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(&r[3], "0");
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(&r[12], "true");
    }
    let summary = json(&o.join("stability_summary.json"));
    assert_eq!(summary["violations"], 0);
    assert!(summary["monotone_diagonal"].is_null());
}
