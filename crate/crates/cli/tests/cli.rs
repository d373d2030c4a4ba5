use std::path::Path;
use std::process::{Command, Output};

fn dcp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn gen(dir: &Path) {
    let o = dcp(
        &["gen-data", "--kind", "blobs", "--k", "3", "--rotation", "35", "--translation", "1,0", "--n-per-class", "60", "--seed", "7", "--out-dir", "data"],
        dir,
    );
    assert!(o.status.success(), "{o:?}");
}

#[test]
fn gen_data_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let first = std::fs::read(dir.path().join("data/target.csv")).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("data/data_manifest.json")).unwrap();
    gen(dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("data/target.csv")).unwrap());
    assert_eq!(manifest, std::fs::read_to_string(dir.path().join("data/data_manifest.json")).unwrap());
    assert!(String::from_utf8(first).unwrap().starts_with("f0,f1,label,domain\n"));

    let o = dcp(&["gen-data", "--k", "1", "--out-dir", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = dcp(&["gen-data", "--sigma", "nan-ish"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_round_trip_and_manifest_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--iters", "60", "--seed", "3", "--out-dir", "run"], d);
    assert!(o.status.success(), "{o:?}");
    let metrics = std::fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 61);
    assert!(metrics.starts_with("T,l_d,l_g,l_c1,l_c2,l_cc,l_cs,tau_adv,tau_clu,n_selected,pseudo_precision,source_acc,target_acc\n"));

    let o = dcp(&["train", "--from-manifest", "run/manifest.json", "--out-dir", "again"], d);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(metrics, std::fs::read_to_string(d.join("again/metrics.csv")).unwrap());

    let e1 = dcp(&["eval", "--checkpoint", "run/checkpoint.json", "--data", "data/source.csv", "--out-dir", "run"], d);
    let e2 = dcp(&["eval", "--checkpoint", "run/checkpoint.json", "--data", "data/source.csv", "--out-dir", "run"], d);
    assert!(e1.status.success());
    assert_eq!(e1.stdout, e2.stdout);
    let text = stdout(&e1);
    let acc_line = text.lines().find(|l| l.starts_with("accuracy: ")).unwrap();
    let acc: f64 = acc_line["accuracy: ".len()..].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(acc_line.split('.').nth(1).unwrap().len(), 4);
    let report = std::fs::read_to_string(d.join("run/eval_report.csv")).unwrap();
    let total: usize = report.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 180);
}

#[test]
fn ablation_flags_and_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    std::fs::write(d.join("cfg.toml"), "iterations = 5\nbatch_size = 12\n\n[seeds]\nsampler = 17\n").unwrap();
    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--config", "cfg.toml", "--alpha", "0", "--no-pseudo", "--out-dir", "base"], d);
    assert!(o.status.success(), "{o:?}");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("base/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["alpha"], 0.0);
    assert_eq!(manifest["config"]["pseudo_labels"], false);
    assert_eq!(manifest["config"]["batch_size"], 12);
    assert_eq!(manifest["config"]["seeds"]["sampler"], 17);
    assert_eq!(manifest["source"]["seed"], 7);
    assert!(manifest["source"]["spec_sha256"].is_string());
    let metrics = std::fs::read_to_string(d.join("base/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 6);
    assert!(metrics.lines().skip(1).all(|l| l.split(',').nth(9) == Some("0")));

    std::fs::write(d.join("bad.toml"), "alpha = -1\n").unwrap();
    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--config", "bad.toml"], d);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(d.join("typo.json"), "{\"alpah\": 1}").unwrap();
    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--config", "typo.json"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_iterations_give_empty_metrics_and_a_valid_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--iters", "0", "--out-dir", "z"], d);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(d.join("z/metrics.csv")).unwrap().lines().count(), 1);
    let o = dcp(&["eval", "--checkpoint", "z/checkpoint.json", "--data", "data/target.csv", "--out-dir", "z"], d);
    assert!(o.status.success());
}

#[test]
fn exit_codes_follow_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let o = dcp(&["train", "--source", "missing.csv", "--target", "data/target.csv"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));

    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--lr", "1e6", "--iters", "50", "--out-dir", "nan"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));

    let o = dcp(&["train", "--source", "data/source.csv", "--target", "data/target.csv", "--iters", "0", "--out-dir", "ok"], d);
    assert!(o.status.success());
    let text = std::fs::read_to_string(d.join("ok/checkpoint.json")).unwrap();
    std::fs::write(d.join("old.json"), text.replace("dcp-checkpoint-v1", "dcp-checkpoint-v0")).unwrap();
    let o = dcp(&["eval", "--checkpoint", "old.json", "--data", "data/target.csv"], d);
    assert_eq!(o.status.code(), Some(4));

    let o = dcp(&["frobnicate"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_table_and_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcp(&["gradcheck"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("loss,instances,max_rel_error,threshold,status"));
    let names: Vec<&str> = lines.clone().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["L_D", "L_G", "L_C1", "L_CC", "L_CS"]);
    for l in lines {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), 5);
        assert!(cells[2].parse::<f64>().unwrap() < 1e-4);
        assert_eq!(cells[4], "PASS");
    }

    let o = dcp(&["gradcheck", "--instances", "3", "--inject-sign-flip", "L_CC"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("L_CC,") && l.ends_with(",FAIL")));
    assert!(text.lines().filter(|l| l.ends_with(",PASS")).count() == 4);
}

#[test]
fn schedule_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcp(&["schedule", "--t-max", "200", "--out-dir", "s"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text, std::fs::read_to_string(dir.path().join("s/schedule.csv")).unwrap());
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    assert!(text.contains("\n0,0.400000,0.500000\n"));
    assert!(text.contains("\n100,0.631059,0.731059\n"));
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1] && w[1][2] >= w[0][2]);
    }
}
