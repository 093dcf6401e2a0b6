use std::path::Path;
use std::process::{Command, Output};

fn pmaxevt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmaxevt"))
        .args(args)
        .env_remove("PMAXEVT_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn law_ops_emit_one_object() {
    let v = json(&pmaxevt(&["law", "cdf", "--family", "2", "--alpha", "1", "--x", "0.25"]));
    assert_eq!(v["op"], "cdf");
    assert_eq!(v["family"], 2);
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-15);

    let v = json(&pmaxevt(&["law", "kcdf", "--family", "2", "--alpha", "1", "--k", "2", "--x", "0.36787944117144233"]));
    assert!((v["value"].as_f64().unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-12);

    let v = json(&pmaxevt(&["law", "norming", "--family", "3", "--n", "10", "--source", "paper"]));
    assert!(v["residual"].as_f64().unwrap() > 0.05);
    let v = json(&pmaxevt(&["law", "norming", "--family", "3", "--n", "10"]));
    assert!(v["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn bad_parameters_fail_cleanly() {
    let out = pmaxevt(&["law", "cdf", "--family", "7", "--x", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = pmaxevt(&["glogpd", "vonmises", "--branch", "v1", "--gamma", "-1", "--x", "2"]);
    assert!(!out.status.success());
}

#[test]
fn glogpd_and_vonmises() {
    let v = json(&pmaxevt(&["glogpd", "cdf", "--family", "6", "--x", "-0.5"]));
    // W6(x) = 1 + x on (-1, 0)
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    let v = json(&pmaxevt(&["glogpd", "vonmises", "--branch", "v1", "--gamma", "0", "--x", "2"]));
    assert!((v["cdf"].as_f64().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn fig1_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let p = path.to_str().unwrap();
    let out = pmaxevt(&["glogpd", "fig1", "--grid-start", "-1", "--grid-end", "3", "--points", "41", "--out", p]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("label,x,density\n"));
    let table = pmaxevt_core::glogpd::DensityTable::read_csv(text.as_bytes()).unwrap();
    assert_eq!(table.rows.len(), 8 * 41);
    // the top-level alias writes the same bytes
    let alias = pmaxevt(&["fig1", "--grid-start", "-1", "--grid-end", "3", "--points", "41"]);
    assert_eq!(alias.stdout, text.as_bytes());
}

#[test]
fn model_exactcdf_and_sampling() {
    let v = json(&pmaxevt(&["model", "exactcdf", "--base", "unit-uniform", "--family", "2", "--alpha", "1", "--n", "100", "--x", "0.4"]));
    assert!((v["cdf"].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.csv");
    let p = path.to_str().unwrap();
    let run = |seed: &str| {
        let out = pmaxevt(&["model", "sample", "--family", "3", "--n", "30", "--k", "3", "--m", "50", "--seed", seed, "--out", p]);
        assert!(out.status.success());
        std::fs::read_to_string(&path).unwrap()
    };
    let a = run("5");
    assert_eq!(a, run("5"));
    assert_ne!(a, run("6"));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.len(), 3);
        assert!(v[0] >= v[1] && v[1] >= v[2]);
    }
}

#[test]
fn sample_seed_from_environment() {
    let run = |env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pmaxevt"));
        cmd.args(["model", "sample", "--family", "3", "--n", "5", "--m", "4"]);
        match env {
            Some(s) => cmd.env("PMAXEVT_SEED", s),
            None => cmd.env_remove("PMAXEVT_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    let explicit = pmaxevt(&["model", "sample", "--family", "3", "--n", "5", "--m", "4", "--seed", "9"]).stdout;
    assert_eq!(run(Some("9")), explicit);
    assert_ne!(run(None), explicit);
}

#[test]
fn distance_reports_mirror_fields() {
    let v = json(&pmaxevt(&["distance", "hellinger", "--base", "zero", "--family", "3", "--n", "100"]));
    for key in ["kind", "value", "error_estimate", "n", "k", "converged"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["kind"], "hellinger");
    let h = v["value"].as_f64().unwrap();
    let tv = json(&pmaxevt(&["distance", "tv", "--base", "zero", "--family", "3", "--n", "100"]))["value"].as_f64().unwrap();
    let ks = json(&pmaxevt(&["distance", "ks", "--base", "zero", "--family", "3", "--n", "100"]))["value"].as_f64().unwrap();
    assert!(ks <= tv && tv <= h && h * h / 2.0 <= tv);

    let b = json(&pmaxevt(&["distance", "bound", "--which", "eq23", "--base", "zero", "--family", "3", "--n", "100", "--c", "1"]));
    for key in ["integral_term", "tail_term", "universal_constant_term", "total"] {
        assert!(b.get(key).is_some(), "missing {key}");
    }
    assert!(b["total"].as_f64().unwrap() >= h);
    let b = json(&pmaxevt(&["distance", "bound", "--which", "thm33", "--base", "zero", "--family", "3", "--n", "100", "--k", "2", "--mc-samples", "2000"]));
    assert!(b["joint_term"].is_number());
}

#[test]
fn paper_norming_flag_changes_result() {
    let d = json(&pmaxevt(&["distance", "tv", "--family", "3", "--n", "50"]))["value"].as_f64().unwrap();
    let p = json(&pmaxevt(&["distance", "tv", "--family", "3", "--n", "50", "--norming", "paper"]))["value"].as_f64().unwrap();
    assert!(p > 10.0 * d);
}

#[test]
fn rate_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("envelope_delta_half.json");
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = pmaxevt(&["rate", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n,k,kind,value,error,bound_total,bound_integral,bound_tail,bound_joint\n"));
    assert!(text.contains("# slope kind=hellinger k=1"));
}

#[test]
fn rate_json_output_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"base": {"perturbation": "zero"}, "family": 3, "n_grid": [10, 100], "k_list": [2],
            "distances": ["total_variation"], "bound": {"mc_samples": 500}, "seed": 1}"#,
    )
    .unwrap();
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pmaxevt"));
        cmd.args(["rate", "--config", cfg_path.to_str().unwrap(), "--format", "json"]);
        match seed {
            Some(s) => cmd.env("PMAXEVT_SEED", s),
            None => cmd.env_remove("PMAXEVT_SEED"),
        };
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    assert_eq!(run(None)["seed"], 1);
    assert_eq!(run(Some("42"))["seed"], 42);
}

#[test]
fn rate_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"base": {"perturbation": "zero"}, "family": 3, "n_grid": [100, 10]}"#).unwrap();
    let out = pmaxevt(&["rate", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        pmaxevt_core::ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    }
}
