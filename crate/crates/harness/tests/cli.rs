mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hoitg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoitg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = hoitg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = common::tiny_train(2, 2);
    let path = dir.join("train.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn full_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    for data in ["data_a", "data_b"] {
        ok(&["gen", "--out", s(&d.join(data)), "--num", "9", "--seed", "3", "--res", "16"]);
    }
    assert_eq!(dir_bytes(&d.join("data_a")), dir_bytes(&d.join("data_b")));

    let data = d.join("data_a");
    for run in ["a", "b"] {
        ok(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&d.join(format!("{run}.ckpt")))]);
    }
    assert_eq!(fs::read(d.join("a.ckpt")).unwrap(), fs::read(d.join("b.ckpt")).unwrap());
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    assert_eq!(fs::read_to_string(d.join("a.csv")).unwrap().lines().count(), 1 + 4);

    let out = ok(&["eval", "--data", s(&data), "--ckpt", s(&d.join("a.ckpt")), "--report", s(&d.join("rep/eval.json")), "--split", "all"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("rep/eval.json")).unwrap()).unwrap();
    assert_eq!(report["refined"]["samples"], 9);
    assert!(d.join("rep/eval.txt").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("refined"));

    ok(&["viz-attn", "--ckpt", s(&d.join("a.ckpt")), "--data", s(&data), "--sample", "0", "--layer", "0", "--block", "2", "--out", s(&d.join("attn/s0"))]);
    assert!(d.join("attn/s0.csv").exists() && d.join("attn/s0.pgm").exists());

    ok(&["--sequential", "ablate", "--variant", "none,h+o2", "--data", s(&data), "--out", s(&d.join("abl")), "--config", s(&cfg)]);
    let table = fs::read_to_string(d.join("abl/ablation.txt")).unwrap();
    assert!(table.contains("none") && table.contains("h+o2"));
    assert!(d.join("abl/ablation.json").exists());
}

#[test]
fn exit_codes_classify_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    let data = d.join("data");
    ok(&["gen", "--out", s(&data), "--num", "9", "--res", "16"]);

    let code = |args: &[&str]| hoitg(args).status.code().unwrap();
    assert_eq!(code(&["ablate", "--variant", "h+o7", "--data", s(&data), "--out", s(&d.join("x"))]), 2);
    assert_eq!(code(&["train", "--data", s(&d.join("missing")), "--out", s(&d.join("m.ckpt"))]), 3);
    fs::write(d.join("bad.json"), "{\"epochs\": 0}").unwrap();
    assert_eq!(code(&["train", "--data", s(&data), "--config", s(&d.join("bad.json")), "--out", s(&d.join("m.ckpt"))]), 2);
    // Default model resolution 64 does not fit a 16-pixel dataset.
    assert_eq!(code(&["train", "--data", s(&data), "--out", s(&d.join("m.ckpt"))]), 2);
    assert_eq!(code(&["gen", "--out", s(&d.join("g")), "--num", "0"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    ok(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&d.join("ok.ckpt"))]);
    let ck = s(&d.join("ok.ckpt")).to_string();
    assert_eq!(code(&["viz-attn", "--ckpt", &ck, "--data", s(&data), "--sample", "0", "--layer", "0", "--block", "5", "--out", s(&d.join("a"))]), 2);
    assert_eq!(code(&["viz-attn", "--ckpt", &ck, "--data", s(&data), "--sample", "99", "--layer", "0", "--block", "0", "--out", s(&d.join("a"))]), 2);
    assert_eq!(code(&["eval", "--data", s(&data), "--ckpt", s(&d.join("nope.ckpt")), "--report", s(&d.join("r.json"))]), 3);

    let mut big = common::tiny_train(2, 3);
    big.learning_rate = 1e30;
    fs::write(d.join("diverge.json"), serde_json::to_string(&big).unwrap()).unwrap();
    assert_eq!(code(&["train", "--data", s(&data), "--config", s(&d.join("diverge.json")), "--out", s(&d.join("div.ckpt"))]), 4);
    assert!(d.join("div.abort.json").exists());
}
