use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fkl(args: &[&str], dir: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fkl"))
        .args(args)
        .current_dir(dir)
        .env_remove("FKL_SEED")
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn json(args: &[&str], dir: &Path) -> Value {
    let out = fkl(args, dir);
    assert!(out.status.success(), "fkl {args:?} failed");
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn shape(v: &Value) -> Vec<u64> {
    v["shape"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

#[test]
fn simulate_default_grids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let lv = json(&["simulate", "--system", "lotka-volterra", "--paths", "100", "--seed", "7", "--out", "lv.fklt"], d);
    assert_eq!(shape(&lv), [100, 401, 2]);
    let rep = json(&["simulate", "--system", "repressilator", "--paths", "3", "--out", "rep.fklt"], d);
    assert_eq!(shape(&rep), [3, 751, 3]);
    let petal = json(&["simulate", "--system", "petal", "--paths", "5", "--out", "petal.fklt"], d);
    assert_eq!(shape(&petal), [5, 101, 2]);

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(d.join("lv.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"]["config"]["seed"], 7);
    assert_eq!(manifest["layout"], "path,time,dim");
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&["--seed", "3", "simulate", "--system", "linear-sde", "--paths", "20", "--out", "a.fklt"], d);
    json(&["--seed", "3", "simulate", "--system", "linear-sde", "--paths", "20", "--out", "b.fklt"], d);
    assert_eq!(std::fs::read(d.join("a.fklt")).unwrap(), std::fs::read(d.join("b.fklt")).unwrap());
}

#[test]
fn oracle_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = json(&["oracle", "linear-sde", "--ca", "0.01", "--cb", "1.5", "--g", "0.75", "--d", "1", "--m0", "2", "--var0", "0.2"], d);
    assert!((v["kl_forward"].as_f64().unwrap() - 8.93).abs() <= 0.01);
    assert!((v["kl_reverse"].as_f64().unwrap() - 54.71).abs() <= 0.01);
    let same = json(&["oracle", "linear-sde", "--ca", "1", "--cb", "1"], d);
    assert_eq!(same["kl_forward"], 0.0);
    assert_eq!(same["kl_reverse"], 0.0);
    let zero = json(&["oracle", "gaussian", "--mean-scale", "0"], d);
    assert_eq!(zero["kl_forward"], 0.0);
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[fkl]\nn_samples = 3\n").unwrap();
    let out = fkl(&["--config", "bad.toml", "oracle", "gaussian"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn gaussian_fkl_with_mode_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = json(
        &[
            "fkl", "--backend", "analytic", "--samples", "400", "--time-draws", "10",
            "--sweep", "modes=8,16,32,64", "--sweep-out", "sweep.csv",
        ],
        d,
    );
    let oracle = v["oracle"].as_f64().unwrap();
    let fwd = v["forward"]["value"].as_f64().unwrap();
    let se = v["forward"]["std_error"].as_f64().unwrap();
    assert!((fwd - oracle).abs() < 4.0 * se, "{fwd} ± {se} vs {oracle}");
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "direction,axis,value,estimate,std_error,n_evals,n_sum_modes,seed");
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[4].starts_with("forward,n_sum_modes,64,"));
}

#[test]
fn same_file_null_case_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&["simulate", "--system", "linear-sde", "--paths", "200", "--out", "a.fklt"], d);
    json(&["simulate", "--system", "linear-sde", "--drift-coeff", "1.5", "--paths", "200", "--out", "b.fklt"], d);
    let fit = ["--backend", "trained", "--iterations", "600", "--samples", "100", "--time-draws", "10"];
    let null = json(&[&["fkl", "--a", "a.fklt", "--b", "a.fklt"][..], &fit[..]].concat(), d);
    let apart = json(&[&["fkl", "--a", "a.fklt", "--b", "b.fklt"][..], &fit[..]].concat(), d);
    let n = null["forward"]["value"].as_f64().unwrap().max(null["reverse"]["value"].as_f64().unwrap());
    let a = apart["forward"]["value"].as_f64().unwrap().min(apart["reverse"]["value"].as_f64().unwrap());
    assert!(n >= 0.0);
    assert!(n < 0.2 * a, "null {n} vs between-measure {a}");
}

#[test]
fn fit_then_reuse_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&["simulate", "--system", "linear-sde", "--paths", "60", "--out", "a.fklt"], d);
    json(&["simulate", "--system", "linear-sde", "--drift-coeff", "1.5", "--paths", "60", "--out", "b.fklt"], d);
    let fit = json(&["fit-velocity", "--a", "a.fklt", "--b", "b.fklt", "--iterations", "100", "--out", "w.fklw"], d);
    assert!(fit["final_eval_loss"].as_f64().unwrap().is_finite());
    let v = json(&["fkl", "--a", "a.fklt", "--b", "b.fklt", "--weights", "w.fklw", "--samples", "20", "--time-draws", "2"], d);
    assert_eq!(v["backend"], "trained");
    assert!(v["training"].is_null());
}

fn val_row_emd(d: &Path) -> f64 {
    json(&["--seed", "1", "simulate", "--system", "lotka-volterra", "--paths", "100", "--out", "gt.fklt"], d);
    json(&["--seed", "2", "simulate", "--system", "lotka-volterra", "--paths", "100", "--out", "val.fklt"], d);
    for (name, dir) in [("gt.fklt", "gt"), ("val.fklt", "val")] {
        json(&["snapshots", "--input", name, "--times", "0.125,0.375", "--rule", "shared", "--out-dir", dir], d);
    }
    let out = fkl(
        &["metrics", "--reference", "gt/train.csv", "--candidate", "gt=gt/train.csv", "--candidate", "val=val/train.csv", "--out", "m.csv"],
        d,
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][1], "emd@0.125");
    // the reference against itself is an all-zero row
    assert!(rows[1][1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    rows[2][1].parse().unwrap()
}

#[test]
fn metrics_self_zero_and_validation_row_scale() {
    let dir = tempfile::tempdir().unwrap();
    let emd = val_row_emd(dir.path());
    assert!((0.02..=0.06).contains(&emd), "VAL-row EMD {emd}");

    let out = fkl(&["rank", "--input", "m.csv"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let ranks: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // ties (both MMDs clipped to zero) may pull the ranks slightly together
    assert!(ranks[0] < 1.2 && ranks[1] > 1.8, "{ranks:?}");
}

#[test]
fn snapshot_split_rules() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json(&["simulate", "--system", "petal", "--paths", "10", "--out", "p.fklt"], d);
    let v = json(&["snapshots", "--input", "p.fklt", "--n-times", "5", "--out-dir", "s"], d);
    assert_eq!(v["files"].as_array().unwrap().len(), 2);
    let train = std::fs::read_to_string(d.join("s/train.csv")).unwrap();
    let val = std::fs::read_to_string(d.join("s/val.csv")).unwrap();
    // odd positions (1st, 3rd, 5th) train, even positions validate
    assert_eq!(train.lines().count(), 1 + 3 * 10);
    assert_eq!(val.lines().count(), 1 + 2 * 10);
    assert!(fkl(&["snapshots", "--input", "p.fklt", "--n-times", "5", "--rule", "sideways"], d).status.code() == Some(2));
}

#[test]
fn convert_csv_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t.csv"), "path,time,dim0,dim1\n0,0,1,2\n0,0.5,3,4\n0,1,5,6\n1,0,1,1\n1,0.5,2,2\n1,1,3,3\n").unwrap();
    let v = json(&["convert", "--input", "t.csv", "--out", "t.fklt"], d);
    assert_eq!(shape(&v), [2, 3, 2]);
}

#[test]
fn validate_closed_form_block_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = fkl(&["validate", "--closed-form-only"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 13);
    assert!(table.contains("54.71"));
}
