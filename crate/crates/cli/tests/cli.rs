mod common;

use std::collections::BTreeMap;

use common::{fixture, midway, planted_args, read, simulate_multicentre, stderr, stdout};
use midway::dag::parse_dag;
use midway::scm::{NodeSpec, Scm};
use midway_cli::manifest::sha256_hex;
use serde_json::{json, Value};

fn identify(dag: &str, extra: &[&str], out: &std::path::Path) -> std::process::Output {
    let dag = fixture(dag).display().to_string();
    let mut args = vec!["identify", "--dag", &dag, "--x", "Smoking", "--y", "Outcome", "--latent", "U"];
    args.extend_from_slice(extra);
    let out = out.display().to_string();
    args.extend_from_slice(&["--out", &out]);
    midway(&args)
}

#[test]
fn smoking_graph_is_identified() {
    let dir = tempfile::tempdir().unwrap();
    let o = identify("smoking.dag", &["--forced", "Admitted,Centre"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("identified"));
    assert!(text.contains("{Admitted, Centre}"), "{text}");
    let v: Value = serde_json::from_str(&read(dir.path(), "identify.json")).unwrap();
    assert_eq!(v["status"], "Identified");
    assert_eq!(v["admissible_sets"], json!([["Admitted", "Centre"]]));
}

#[test]
fn hypertension_graph_is_not_identified() {
    let dir = tempfile::tempdir().unwrap();
    let o = identify("smoking_hypertension.dag", &["--forced", "Admitted,Centre"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Smoking -> Admitted <- Hypertension <- U -> Outcome"), "{text}");
    assert!(text.contains("Smoking -> Hypertension <- U -> Outcome"), "{text}");
}

#[test]
fn unknown_node_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let dag = fixture("smoking.dag").display().to_string();
    let out = dir.path().display().to_string();
    let o = midway(&["identify", "--dag", &dag, "--x", "Coffee", "--y", "Outcome", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Coffee"));
}

#[test]
fn filter_columns_are_conditioned_on() {
    let dir = tempfile::tempdir().unwrap();
    let o = identify("smoking.dag", &["--filter", "Admitted == 1 and Centre == 2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(dir.path(), "identify.json")).unwrap();
    assert_eq!(v["forced"], json!(["Admitted", "Centre"]));

    let o = identify("smoking.dag", &["--filter", "Weather == 1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn json_flag_prints_machine_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = identify("smoking.dag", &["--forced", "Admitted,Centre", "--json"], dir.path());
    assert_eq!(stdout(&o), read(dir.path(), "identify.json"));
}

fn run_match(out: &std::path::Path, extra: &[&str]) -> std::process::Output {
    let mut args: Vec<String> = vec!["match".into()];
    args.extend(planted_args());
    args.extend(["--filter", "wfns == 1", "--out"].map(String::from));
    args.push(out.display().to_string());
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    midway(&refs)
}

#[test]
fn planted_stratum_rct_translation() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_match(dir.path(), &["--rct-n", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("100 / 0.46 = 218"), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&read(dir.path(), "match.json")).unwrap();
    assert_eq!(v["result"]["stratum_size"], 147);
    assert_eq!(v["result"]["matched_patients"], 68);
    assert_eq!(v["rct"]["observational_n"], 218);
    assert_eq!(v["covariates"], json!(["severity"]));
}

#[test]
fn rct_n_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_match(dir.path(), &["--rct-n", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("match.json").exists());
}

#[test]
fn repeated_match_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run_match(d.path(), &["--seed", "7"]).status.success());
    }
    for f in ["match.json", "pairs.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let other = tempfile::tempdir().unwrap();
    assert!(run_match(other.path(), &["--seed", "8"]).status.success());
    let seed = |d: &std::path::Path| serde_json::from_str::<Value>(&read(d, "match.json")).unwrap()["result"]["seed"].clone();
    assert_eq!(seed(a.path()), 7);
    assert_eq!(seed(other.path()), 8);
}

#[test]
fn manifest_records_inputs_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_match(dir.path(), &["--seed", "11", "--rct-n", "50"]).status.success());
    let m: Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(m["command"], "match");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["filter"], "wfns == 1");
    assert_eq!(m["config"]["rct_n"], 50);
    assert_eq!(m["outputs"], json!(["match.json", "pairs.csv"]));
    let data = std::fs::read(fixture("planted_stratum.csv")).unwrap();
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs[0]["role"], "data");
    assert_eq!(inputs[0]["sha256"], sha256_hex(&data));
    assert_eq!(inputs[1]["role"], "schema");
}

fn positivity(out: &std::path::Path, data: Vec<String>, filter: Option<&str>) -> std::process::Output {
    let mut args: Vec<String> = vec!["positivity".into()];
    args.extend(data);
    if let Some(f) = filter {
        args.extend(["--filter".to_string(), f.to_string()]);
    }
    args.extend(["--out".to_string(), out.display().to_string()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    midway(&refs)
}

#[test]
fn planted_extreme_agreement_is_not_adequate() {
    let dir = tempfile::tempdir().unwrap();
    let o = positivity(dir.path(), planted_args(), Some("wfns == 1"));
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(dir.path(), "positivity.json")).unwrap();
    assert_ne!(v["overlap"]["verdict"], "Adequate");
    assert!(read(dir.path(), "overlap.csv").starts_with("grid,density_treated,density_control\n"));
}

#[test]
fn shared_policy_arms_are_adequate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "centres": 3,
        "per_centre": 400,
        "propensity_shifts": [0.0, 0.0, 0.0],
        "covariates": [
            {"name": "poor_grade", "prevalence": [0.2, 0.5], "on_treatment": 0.0, "on_outcome": 0.2},
            {"name": "older", "prevalence": [0.3, 0.4], "on_treatment": 0.0, "on_outcome": 0.1}
        ]
    });
    let (data, schema) = simulate_multicentre(dir.path(), &cfg, 3);
    let out = dir.path().join("pos");
    let o = positivity(&out, vec!["--data".into(), data, "--schema".into(), schema], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(&out, "positivity.json")).unwrap();
    assert_eq!(v["overlap"]["verdict"], "Adequate", "{}", stdout(&o));
    assert_eq!(v["covariates"], json!(["poor_grade", "older"]));
}

#[test]
fn empty_stratum_reports_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let o = positivity(dir.path(), planted_args(), Some("severity > 100"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("is empty") && err.contains("200 input rows"), "{err}");
}

#[test]
fn malformed_filter_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = positivity(dir.path(), planted_args(), Some("wfns == = 1"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("column 9"), "{}", stderr(&o));
}

#[test]
fn simulated_centres_feed_monitoring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "centres": 6,
        "per_centre": 1500,
        "propensity_shifts": [-0.15, -0.09, -0.03, 0.03, 0.09, 0.15],
        "tau": -0.1
    });
    let (data, schema) = simulate_multicentre(dir.path(), &cfg, 5);
    let out = dir.path().join("mon");
    let o = midway(&[
        "monitor", "--data", &data, "--schema", &schema, "--anonymize", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(&out, "monitor.json")).unwrap();
    assert_eq!(v["fit"]["n_centres"], 5);
    let (slope, se) = (v["fit"]["slope"].as_f64().unwrap(), v["fit"]["se_slope"].as_f64().unwrap());
    assert!((slope + 0.1).abs() <= 3.0 * se, "slope {slope} se {se}");
    assert_eq!(v["scatter"]["anonymized"], true);
    let labels: Vec<&str> = v["scatter"]["points"].as_array().unwrap().iter().map(|p| p["label"].as_str().unwrap()).collect();
    assert!(labels.iter().all(|l| !l.starts_with("C0")), "{labels:?}");
    assert!(read(&out, "effects.csv").starts_with("centre,n,alpha,se_alpha,beta,se_beta\n"));
    assert_eq!(read(&out, "scatter.csv").lines().count(), 6);
}

#[test]
fn simulate_from_model_with_intervention() {
    let dir = tempfile::tempdir().unwrap();
    let g = parse_dag("Z -> X; X -> Y; Z -> Y").unwrap();
    let bin = |cpt: Vec<Vec<f64>>| NodeSpec { levels: vec!["0".into(), "1".into()], cpt };
    let nodes = BTreeMap::from([
        ("Z".to_string(), bin(vec![vec![0.5, 0.5]])),
        ("X".to_string(), bin(vec![vec![0.8, 0.2], vec![0.3, 0.7]])),
        ("Y".to_string(), bin(vec![vec![0.9, 0.1], vec![0.6, 0.4], vec![0.5, 0.5], vec![0.2, 0.8]])),
    ]);
    let model = dir.path().join("model.json");
    std::fs::write(&model, Scm::new(g, nodes).unwrap().to_json()).unwrap();
    let out = dir.path().join("sim");
    let args = ["simulate", "--scm", model.to_str().unwrap(), "--n", "300", "--seed", "9", "--do", "X=1", "--out", out.to_str().unwrap()];
    let o = midway(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&out, "data.csv");
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let x = header.iter().position(|h| *h == "X").unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(x) == Some("1")));
    let m: Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["config"]["intervention"], json!({"X": "1"}));
    assert_eq!(m["inputs"][0]["role"], "scm");

    let again = dir.path().join("again");
    let mut args2 = args;
    args2[args2.len() - 1] = again.to_str().unwrap();
    assert!(midway(&args2).status.success());
    assert_eq!(read(&again, "data.csv"), csv);

    let o = midway(&["simulate", "--scm", model.to_str().unwrap(), "--do", "X", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(midway(&[]).status.code(), Some(1));
    assert_eq!(midway(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(midway(&["identify", "--x", "A"]).status.code(), Some(1));
    let help = midway(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for cmd in ["identify", "positivity", "match", "monitor", "simulate", "serve"] {
        assert!(stdout(&help).contains(cmd), "{cmd}");
    }
}

#[test]
fn serve_startup_errors_exit_1() {
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = midway(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));

    let schema = fixture("planted_stratum.schema.json").display().to_string();
    let o = midway(&["serve", "--data", "/nonexistent.csv", "--schema", &schema, "--port", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent.csv"));
}
