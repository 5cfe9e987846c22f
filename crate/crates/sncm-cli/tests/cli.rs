//! End-to-end tests of the `sncm` binary: exit codes, output layout, and
//! byte-level reproducibility of every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sncm"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sncm_cli_test_{}_{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed (status {:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Recursively collect every file under `dir` as (relative path, bytes).
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn print_config_emits_parseable_defaults() {
    let out = run_ok(bin().arg("--print-config"));
    let text = String::from_utf8(out.stdout).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(
        value["mcmc"]["iterations"].as_integer(),
        Some(330_000),
        "unexpected default iterations"
    );
    assert_eq!(value["prior"]["kind"].as_str(), Some("independent"));
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    // no subcommand, no --print-config
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // unknown flag
    let out = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // runtime failure: nonexistent config file
    let out = bin()
        .args(["--config", "/nonexistent/cfg.toml", "fit"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    // runtime failure: unknown scenario
    let dir = workdir("bad_scenario");
    let out = bin()
        .args(["simulate", "--scenario", "nope", "--replicates", "1"])
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_twice_with_same_seed_is_byte_identical() {
    let dir_a = workdir("sim_a");
    let dir_b = workdir("sim_b");
    for dir in [&dir_a, &dir_b] {
        run_ok(bin()
            .args(["simulate", "--scenario", "baseline", "--replicates", "2"])
            .args(["--seed", "7", "--out", dir.to_str().unwrap()]));
    }
    let (a, b) = (snapshot(&dir_a), snapshot(&dir_b));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "file {name} differs between identical runs");
    }
    // expected bundle layout
    for rep in ["rep_000", "rep_001"] {
        for file in ["data.csv", "truth.csv", "rel.csv"] {
            assert!(a.contains_key(&format!("{rep}/{file}")));
        }
    }
    assert!(a.contains_key("manifest.json"));
    // different replicates hold different data
    assert_ne!(a["rep_000/data.csv"], a["rep_001/data.csv"]);
    // different seeds give different data
    let dir_c = workdir("sim_c");
    run_ok(bin()
        .args(["simulate", "--scenario", "baseline", "--replicates", "1"])
        .args(["--seed", "8", "--out", dir_c.to_str().unwrap()]));
    assert_ne!(
        a["rep_000/data.csv"],
        std::fs::read(dir_c.join("rep_000/data.csv")).unwrap()
    );
}

#[test]
fn manifest_hashes_match_file_contents() {
    let dir = workdir("manifest");
    run_ok(bin()
        .args(["simulate", "--scenario", "baseline", "--replicates", "1"])
        .args(["--seed", "3", "--out", dir.to_str().unwrap()]));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 3);
    let files = manifest["files"].as_object().unwrap();
    assert!(!files.is_empty());
    for (rel, hash) in files {
        let bytes = std::fs::read(dir.join(rel)).unwrap();
        let mut hex = String::new();
        use std::fmt::Write;
        for b in <sha2::Sha256 as sha2::Digest>::digest(&bytes) {
            write!(hex, "{b:02x}").unwrap();
        }
        assert_eq!(hash.as_str().unwrap(), hex, "hash mismatch for {rel}");
    }
}

#[test]
fn build_rel_matches_library_block_design() {
    let dir = workdir("rel");
    run_ok(bin().args(["build-rel", "--blocks", "2", "--out", dir.to_str().unwrap()]));
    let got = sncm::relmatrix::RelationshipMatrix::read_csv(&dir.join("rel.csv")).unwrap();
    let want = sncm::relmatrix::simulation_r(2, 20).unwrap();
    assert_eq!(got, want);
}

#[test]
fn build_rel_accepts_a_json_hierarchy() {
    let dir = workdir("rel_json");
    let tree = r#"{
        "name": "root",
        "children": [
            {"name": "a", "members": [0, 1]},
            {"name": "b", "members": [2]}
        ]
    }"#;
    let tree_path = dir.join("tree.json");
    std::fs::write(&tree_path, tree).unwrap();
    run_ok(bin()
        .args(["build-rel", "--hierarchy", tree_path.to_str().unwrap()])
        .args(["--out", dir.to_str().unwrap()]));
    let got = sncm::relmatrix::RelationshipMatrix::read_csv(&dir.join("rel.csv")).unwrap();
    assert_eq!(got.dim(), 3);
    assert!(got.get(0, 1) > 0.0);
    assert_eq!(got.get(0, 2), 0.0);
}

#[test]
fn tune_eta_emits_table_and_positive_choice() {
    let dir = workdir("eta");
    run_ok(bin().args(["build-rel", "--blocks", "1", "--out", dir.to_str().unwrap()]));
    let rel = dir.join("rel.csv");
    run_ok(bin()
        .args(["tune-eta", "--rel", rel.to_str().unwrap()])
        .args(["--inclusion-probability", "0.05", "--grid", "unit"])
        .args(["--seed", "11", "--out", dir.to_str().unwrap()]));
    let table = std::fs::read_to_string(dir.join("eta_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 101, "100 candidates plus header");
    let chosen = std::fs::read_to_string(dir.join("chosen_eta.csv")).unwrap();
    let eta: f64 = chosen.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(eta > 0.0);
}

/// Full pipeline: simulate -> fit (MRF, 3 chains) -> evaluate -> predict ->
/// score, all through the binary, with a determinism check on the fit.
#[test]
fn pipeline_fit_evaluate_predict_score() {
    let dir = workdir("pipeline");
    run_ok(bin()
        .args(["simulate", "--scenario", "baseline", "--replicates", "1"])
        .args(["--seed", "5", "--out", dir.to_str().unwrap()]));
    let rep = dir.join("rep_000");

    let predictors: Vec<String> = (1..=300).map(|j| format!("\"x{j}\"")).collect();
    let config = format!(
        r#"
[data]
path = "{data}"
responses = ["y"]
predictors = [{preds}]

[prior]
kind = "mrf"
rel_path = "{rel}"
eta = 0.5
inclusion_probability = 0.02

[model]
nu0_sq = 25.0
nu_sq = 4.0
nud_sq = 25.0
xi0 = 5.0
sigma0_sq = 4.0

[mcmc]
iterations = 1200
burn_in = 200
thin = 5
chains = 3
seed = 9
"#,
        data = rep.join("data.csv").display(),
        rel = rep.join("rel.csv").display(),
        preds = predictors.join(", ")
    );
    let cfg_path = dir.join("run.toml");
    std::fs::write(&cfg_path, config).unwrap();

    let fit_a = workdir("pipeline_fit_a");
    let fit_b = workdir("pipeline_fit_b");
    for out in [&fit_a, &fit_b] {
        run_ok(bin()
            .args(["--config", cfg_path.to_str().unwrap(), "fit"])
            .args(["--out", out.to_str().unwrap()]));
    }
    // determinism: identical (config, seed) -> identical bytes everywhere
    let (a, b) = (snapshot(&fit_a), snapshot(&fit_b));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "file {name} differs between identical runs");
    }
    // three chains -> convergence report emitted automatically
    for file in ["selection.csv", "summary.csv", "elpd.csv", "trace.csv",
                 "convergence.csv", "draws.json"] {
        assert!(a.contains_key(&format!("y/{file}")), "missing y/{file}");
    }
    let conv = std::str::from_utf8(&a["y/convergence.csv"]).unwrap();
    assert!(conv.lines().any(|l| l.starts_with("model_size,")));

    // evaluate reads the draws bundle back
    let eval_dir = workdir("pipeline_eval");
    run_ok(bin()
        .args(["evaluate", "--fit", fit_a.join("y").to_str().unwrap()])
        .args(["--out", eval_dir.to_str().unwrap()]));
    let elpd = std::fs::read_to_string(eval_dir.join("elpd.csv")).unwrap();
    let row = elpd.lines().nth(1).unwrap();
    assert!(row.starts_with("y,"));
    let fields: Vec<&str> = row.split(',').collect();
    let elpd_is: f64 = fields[1].parse().unwrap();
    let elpd_waic: f64 = fields[2].parse().unwrap();
    assert!(elpd_is.is_finite() && elpd_waic.is_finite());
    // the standalone evaluation must agree with the per-fit elpd.csv
    let fit_elpd = std::str::from_utf8(&a["y/elpd.csv"]).unwrap();
    let fit_fields: Vec<&str> = fit_elpd.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[1], fit_fields[0]);
    assert_eq!(fields[2], fit_fields[1]);

    // predict produces one summary row per observation
    let pred_dir = workdir("pipeline_pred");
    run_ok(bin()
        .args(["--config", cfg_path.to_str().unwrap()])
        .args(["predict", "--fit", fit_a.join("y").to_str().unwrap()])
        .args(["--response", "y", "--draws", "25"])
        .args(["--out", pred_dir.to_str().unwrap()]));
    let pred = std::fs::read_to_string(pred_dir.join("predictive.csv")).unwrap();
    assert_eq!(pred.lines().count(), 401, "400 rows plus header");

    // score against the truth sidecar
    let score_dir = workdir("pipeline_score");
    run_ok(bin()
        .args(["score", "--truth", rep.join("truth.csv").to_str().unwrap()])
        .args(["--selection", fit_a.join("y/selection.csv").to_str().unwrap()])
        .args(["--scenario", "baseline", "--prior", "mrf"])
        .args(["--out", score_dir.to_str().unwrap()]));
    let metrics = std::fs::read_to_string(score_dir.join("metrics.csv")).unwrap();
    let row = metrics.lines().nth(1).unwrap();
    assert!(row.starts_with("baseline,mrf,1,"));
    let tpr: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    let fdr: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&tpr));
    assert!((0.0..=1.0).contains(&fdr));
    let per_var = std::fs::read_to_string(score_dir.join("variable_metrics.csv")).unwrap();
    assert_eq!(per_var.lines().count(), 21, "20 true predictors plus header");
}
