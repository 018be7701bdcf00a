use std::process::Command;

fn qfslab(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qfslab")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap())
}

fn json(args: &[&str]) -> serde_json::Value {
    let (ok, text) = qfslab(args);
    assert!(ok, "{args:?}");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn bounds_json_and_curves() {
    let v = json(&["bounds", "--n", "100", "--m", "9843"]);
    assert!((v["main_term_log10"].as_f64().unwrap() + 79.02).abs() < 0.01);
    let v = json(&["bounds", "--n", "4", "--group-order", "4!", "--m", "100", "--equivariant", "--stab", "6"]);
    assert_eq!(v["kind"], "equivariant");
    let (ok, csv) = qfslab(&["bounds", "--n", "8", "--curves", "10", "1000", "--points", "3"]);
    assert!(ok);
    assert_eq!(csv.lines().count(), 4);
    assert!(!qfslab(&["bounds", "--n", "3", "--eps", "0.7"]).0);
}

#[test]
fn covering_modes() {
    assert_eq!(json(&["covering", "--mode", "lattice", "--n", "2", "--q", "4"])["estimate"]["value"], 13.0);
    let v = json(&["covering", "--mode", "mc", "--group", "cn", "--n", "3", "--samples", "20000"]);
    assert_eq!(v["group_order"], 3);
    let v = json(&["covering", "--mode", "analytic", "--n", "3", "--eps", "0.1"]);
    assert_eq!(v["estimate"]["method"], "analytic");
}

#[test]
fn covering_from_generator_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    std::fs::write(&path, r#"{"degree": 4, "generators": [[2,3,4,1]]}"#).unwrap();
    let spec = format!("gens@{}", path.display());
    let v = json(&["covering", "--mode", "lattice", "--group", &spec, "--n", "4", "--q", "2"]);
    assert_eq!(v["group_order"], 4);
}

#[test]
fn qfs_ops() {
    let v = json(&["qfs", "dist", "--x", "1,2,3", "--y", "3,1,2"]);
    assert_eq!(v["distance"], 0.0);
    let v = json(&["qfs", "canon", "--group", "cn", "--x", "1,3,2"]);
    assert_eq!(v["canonical"], serde_json::json!([3.0, 2.0, 1.0]));
    let v = json(&["qfs", "orbit", "--x", "1,1,2"]);
    assert_eq!(v["size"], 3);
    assert!(!qfslab(&["qfs", "dist", "--x", "1,2"]).0);
}

#[test]
fn sortnet_checks_and_emits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let v = json(&["sortnet", "--n", "5", "--check", "exhaustive", "--emit", path.to_str().unwrap()]);
    assert_eq!(v["checked"], 120);
    assert_eq!(v["failures"], 0);
    let net: qfslab::relunet::ReluNetwork = serde_json::from_reader(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(net.evaluate(&[1.0, 5.0, 2.0, 4.0, 3.0]).unwrap(), vec![5.0, 4.0, 3.0, 2.0, 1.0]);
}

#[test]
fn experiment_small_run_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"n_total": 12, "n_list": [2, 4], "m_train": 8, "m_test": 50, "epochs": 2,
            "batch": 4, "seeds": [1, 2], "equivariant_widths": [8], "head_widths": [4]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let v = json(&["experiment", "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(v["summary"].as_array().unwrap().len(), 2);
    let gaps = std::fs::read_to_string(out.join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 5);
    let summary_before = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let (ok, _) = qfslab(&["experiment", "plotdata", "--out", out.to_str().unwrap(), "--m-train", "8"]);
    assert!(ok);
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap(), summary_before);
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 41);
}
