use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rdpg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdpg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn generate_sbm(dir: &Path, out: &str, seed: &str) {
    let o = rdpg(
        &["generate", "sbm", "--sizes", "60,60", "--p", "0.5", "--q", "0.1", "--seed", seed, "--out", out],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "a", "7");
    generate_sbm(tmp.path(), "b", "7");
    generate_sbm(tmp.path(), "c", "8");
    let read = |d: &str| fs::read_to_string(tmp.path().join(d).join("edges.tsv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    for f in ["nodes.txt", "truth.csv", "labels.csv", "provenance.json"] {
        assert!(tmp.path().join("a").join(f).exists(), "missing {f}");
    }
}

#[test]
fn embed_writes_embedding_report_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "g", "1");
    for method in ["ase", "gd", "bcd"] {
        let out = format!("e_{method}");
        let v = json_stdout(&rdpg(
            &["embed", "--input", "g/edges.tsv", "--method", method, "--d", "2", "--trace", "--out", &out, "--json"],
            tmp.path(),
        ));
        assert_eq!(v["converged"], true);
        assert_eq!(v["d"], 2);
        assert!(v["final_cost"].as_f64().unwrap() <= v["initial_cost"].as_f64().unwrap() + 1e-9);
        let dir = tmp.path().join(&out);
        let csv = fs::read_to_string(dir.join("embedding.csv")).unwrap();
        assert!(csv.starts_with("node_id,dim_0,dim_1\n"));
        assert_eq!(csv.lines().count(), 121);
        assert!(dir.join("report.json").exists());
        assert!(dir.join("trace.csv").exists());
    }
}

#[test]
fn refinement_never_costs_more_than_ase() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "g", "2");
    let cost = |method: &str| {
        let v = json_stdout(&rdpg(
            &["embed", "--input", "g/edges.tsv", "--method", method, "--d", "2", "--out", method, "--json"],
            tmp.path(),
        ));
        v["final_cost"].as_f64().unwrap()
    };
    let ase = cost("ase");
    assert!(cost("gd") <= ase * (1.0 + 1e-9));
    assert!(cost("bcd") <= ase * (1.0 + 1e-9));
}

#[test]
fn directed_generators_round_trip_as_directed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdpg(&["generate", "senate", "--senators", "20,20", "--laws", "20,40,10", "--out", "s"], tmp.path());
    assert!(o.status.success());
    let v = json_stdout(&rdpg(
        &["embed", "--input", "s/edges.tsv", "--method", "rgd", "--d", "2", "--out", "e", "--json"],
        tmp.path(),
    ));
    assert_eq!(v["directed"], true);
    assert!(v["max_constraint_violation"].as_f64().unwrap() < 1e-8);
    assert!(tmp.path().join("e/embedding_out.csv").exists());
    assert!(tmp.path().join("e/embedding_in.csv").exists());

    let ev = json_stdout(&rdpg(
        &[
            "eval", "--a", "e/embedding_out.csv", "--a-in", "e/embedding_in.csv",
            "--b", "e/embedding_out.csv", "--b-in", "e/embedding_in.csv",
            "--edges", "s/edges.tsv", "--json",
        ],
        tmp.path(),
    ));
    assert!(ev["procrustes_sq"].as_f64().unwrap() < 1e-8);
    assert!(ev["error"].as_f64().unwrap() < 1e-8);
    let cost = ev["cost"].as_f64().unwrap();
    assert!((cost - v["final_cost"].as_f64().unwrap()).abs() <= 1e-6 * cost);
}

#[test]
fn gd_on_directed_input_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    rdpg(&["generate", "er", "--n", "30", "--p", "0.3", "--directed", "--out", "g"], tmp.path());
    let o = rdpg(&["embed", "--input", "g/edges.tsv", "--method", "gd", "--d", "1", "--out", "e"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "g", "3");
    let code = |args: &[&str]| rdpg(args, tmp.path()).status.code();

    assert_eq!(code(&["embed", "--bogus"]), Some(1));
    assert_eq!(code(&["embed", "--input", "missing.tsv", "--d", "2"]), Some(1));
    assert_eq!(code(&["embed", "--input", "g/edges.tsv", "--d", "2", "--max-iters", "1", "--out", "x"]), Some(2));
    assert_eq!(
        code(&["embed", "--input", "g/edges.tsv", "--method", "gd", "--d", "2", "--step-size", "10", "--out", "x"]),
        Some(4)
    );
    fs::write(tmp.path().join("pair.tsv"), "a\tb\n").unwrap();
    assert_eq!(code(&["embed", "--input", "pair.tsv", "--method", "ase", "--d", "2", "--out", "x"]), Some(3));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn bad_lines_are_reported_with_their_number() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.tsv"), "a\tb\nb\tc\tnope\n").unwrap();
    let o = rdpg(&["embed", "--input", "bad.tsv", "--d", "1", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.tsv:2"), "{err}");
}

#[test]
fn replicates_get_their_own_directories_and_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "g", "4");
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["embed", "--input", "g/edges.tsv", "--d", "2", "--init", "random", "--replicates", "3", "--out", out, "--json"];
        args.extend_from_slice(extra);
        json_stdout(&rdpg(&args, tmp.path()))
    };
    let par = run("par", &[]);
    let seq = run("seq", &["--deterministic"]);
    let arr = par.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    for (r, v) in arr.iter().enumerate() {
        assert_eq!(v["seed"], r as u64);
        assert!(tmp.path().join(format!("par/replicate_{r}/embedding.csv")).exists());
    }
    for r in 0..3 {
        let a = fs::read_to_string(tmp.path().join(format!("par/replicate_{r}/embedding.csv"))).unwrap();
        let b = fs::read_to_string(tmp.path().join(format!("seq/replicate_{r}/embedding.csv"))).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(seq.as_array().unwrap().len(), 3);
}

#[test]
fn mask_changes_the_observed_cost() {
    let tmp = tempfile::tempdir().unwrap();
    generate_sbm(tmp.path(), "g", "5");
    let mask: String = (0..30).map(|i| format!("{i}\t{}\n", i + 60)).collect();
    fs::write(tmp.path().join("mask.tsv"), mask).unwrap();
    let full = json_stdout(&rdpg(&["embed", "--input", "g/edges.tsv", "--d", "2", "--out", "a", "--json"], tmp.path()));
    let masked = json_stdout(&rdpg(
        &["embed", "--input", "g/edges.tsv", "--mask", "mask.tsv", "--d", "2", "--out", "b", "--json"],
        tmp.path(),
    ));
    assert_ne!(full["final_cost"], masked["final_cost"]);
}

#[test]
fn track_dynamic_sbm_writes_one_row_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdpg(
        &["generate", "dynamic-sbm", "--sizes", "40,40", "--p", "0.5", "--q", "0.1", "--steps", "4", "--out", "dyn"],
        tmp.path(),
    );
    assert!(o.status.success());
    let v = json_stdout(&rdpg(
        &["track", "--manifest", "dyn/manifest.json", "--d", "2", "--filter", "single-pole", "--out", "tr", "--json"],
        tmp.path(),
    ));
    assert_eq!(v["steps"], 5);
    let csv = fs::read_to_string(tmp.path().join("tr/tracking.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,cost,error,error_normalized,n_nodes");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| !l.contains(",,")), "truth errors present: {csv}");
    assert!(tmp.path().join("tr/steps/embedding_t0004.csv").exists());
    assert!(tmp.path().join("tr/embedding.csv").exists());

    let dir_run = json_stdout(&rdpg(
        &["track", "--manifest", "dyn", "--d", "2", "--filter", "single-pole", "--out", "tr2", "--json"],
        tmp.path(),
    ));
    assert_eq!(dir_run["final_cost"], v["final_cost"]);
}

#[test]
fn track_growing_graph_with_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    rdpg(&["generate", "growing-er", "--n0", "40", "--p", "0.3", "--steps", "5", "--out", "gr"], tmp.path());
    let v = json_stdout(&rdpg(
        &["track", "--manifest", "gr/manifest.json", "--d", "1", "--baseline", "--out", "tr", "--json"],
        tmp.path(),
    ));
    assert_eq!(v["n_nodes"], 45);
    assert!(v["final_baseline_error_normalized"].is_number());
    let csv = fs::read_to_string(tmp.path().join("tr/tracking.csv")).unwrap();
    assert!(csv.starts_with("t,cost,error,error_normalized,n_nodes,baseline_error,baseline_error_normalized\n"));
}

#[test]
fn track_errors_name_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    rdpg(&["generate", "growing-er", "--n0", "20", "--p", "0.3", "--steps", "2", "--out", "gr"], tmp.path());
    fs::write(tmp.path().join("gr/step_0002/edges.tsv"), "0\t0\n").unwrap();
    let o = rdpg(&["track", "--manifest", "gr/manifest.json", "--d", "1", "--out", "tr"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("t=2"), "{err}");
}

#[test]
fn eval_rejects_mismatched_nodes_and_is_rotation_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.csv"), "node_id,dim_1,dim_2\nx,1,0\ny,0,1\nz,1,1\n").unwrap();
    fs::write(tmp.path().join("b.csv"), "node_id,dim_1,dim_2\nz,-1,1\ny,-1,0\nx,0,1\n").unwrap();
    fs::write(tmp.path().join("c.csv"), "node_id,dim_1,dim_2\nx,1,0\ny,0,1\nw,1,1\n").unwrap();
    let v = json_stdout(&rdpg(&["eval", "--a", "a.csv", "--b", "b.csv", "--json"], tmp.path()));
    assert!(v["procrustes_sq"].as_f64().unwrap() < 1e-20);
    assert!(v["error"].as_f64().unwrap() < 1e-12);
    let o = rdpg(&["eval", "--a", "a.csv", "--b", "c.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn elbow_finds_two_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdpg(
        &["generate", "sbm", "--sizes", "150,150", "--pi", "0.6,0.05;0.05,0.6", "--out", "g"],
        tmp.path(),
    );
    assert!(o.status.success());
    let v = json_stdout(&rdpg(&["elbow", "--input", "g/edges.tsv", "--d-max", "8", "--json"], tmp.path()));
    assert_eq!(v["d"], 2);
}
