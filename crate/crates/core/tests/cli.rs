use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ffvt::select::{maws, read_jsonl};
use ffvt::tensor::ftz;
use ffvt::Tensor;

fn ffvt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffvt")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = ffvt(args, cwd);
    assert!(
        out.status.success(),
        "ffvt {args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn gen_is_idempotent_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["gen", "--out", "a"], d);
    ok(&["gen", "--out", "b"], d);
    ok(&["gen", "--out", "c", "--seed", "5"], d);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("a/train/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["classes"], 5);
    let train_items = manifest["items"].as_array().unwrap().len();
    let test: serde_json::Value = serde_json::from_slice(&fs::read(d.join("a/test/manifest.json")).unwrap()).unwrap();
    assert_eq!(train_items + test["items"].as_array().unwrap().len(), 5 * (4 + 4));

    for split in ["train", "test"] {
        let (fa, fb, fc) =
            (files(&d.join("a").join(split)), files(&d.join("b").join(split)), files(&d.join("c").join(split)));
        assert_eq!(fa.len(), fc.len());
        let mut differing = 0;
        for ((a, b), c) in fa.iter().zip(&fb).zip(&fc) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
            assert_eq!(a.file_name(), c.file_name());
            if a.extension().unwrap() == "ftz" && fs::read(a).unwrap() != fs::read(c).unwrap() {
                differing += 1;
            }
        }
        assert!(differing > 0);
        assert_eq!(
            fs::read(d.join("a").join(split).join("manifest.json")).unwrap(),
            fs::read(d.join("c").join(split).join("manifest.json")).unwrap()
        );
    }
}

#[test]
fn train_twice_gives_identical_logs_then_inspect_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["gen", "--out", "data"], d);
    let out1 = ok(&["train", "--dataset", "data", "--out", "r1", "--steps", "40", "--selector", "maws"], d);
    ok(&["train", "--dataset", "data", "--out", "r2", "--steps", "40", "--selector", "maws"], d);
    assert!(out1.contains("test accuracy:"));
    let log = fs::read_to_string(d.join("r1/log.csv")).unwrap();
    assert!(log.starts_with("step,lr,loss,acc\n"));
    assert_eq!(log.lines().count(), 41);
    assert_eq!(log, fs::read_to_string(d.join("r2/log.csv")).unwrap());

    ok(
        &["inspect", "--checkpoint", "r1/checkpoint", "--dataset", "data", "--index", "3", "--out", "insp", "--trace"],
        d,
    );
    let sel = read_jsonl(d.join("insp/selection.jsonl")).unwrap();
    let (layers, k, n) = (4, 4, 16);
    assert_eq!(sel.len(), layers - 1);
    for (l, s) in sel.iter().enumerate() {
        assert_eq!(s.layer_index, l + 1);
        assert_eq!(s.indices.len(), k);
        let mut u = s.indices.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), k);
        assert!(s.indices.iter().all(|&i| (1..=n).contains(&i)));
        let a: Tensor<f32> = ftz::read(d.join(format!("insp/attention/layer_{}.ftz", l + 1))).unwrap();
        assert_eq!(a.shape(), &[n + 1, n + 1]);
        assert_eq!(maws(&a, k).unwrap().indices, s.indices);
    }
    let fused: Tensor<f32> = ftz::read(d.join("insp/fused.ftz")).unwrap();
    assert_eq!(fused.shape()[0], 1 + (layers - 1) * k);
    assert!(d.join("insp/attention/layer_2_head_3.ftz").exists());
    let logits: Tensor<f32> = ftz::read(d.join("insp/logits.ftz")).unwrap();
    assert_eq!(logits.shape(), &[5]);

    let eval = ok(&["eval", "--checkpoint", "r1/checkpoint", "--dataset", "data"], d);
    assert!(eval.contains("test accuracy:"));

    let mismatch =
        ffvt(&["inspect", "--checkpoint", "r1/checkpoint", "--dataset", "data", "--out", "x", "--dim", "16"], d);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("--dim 16"));
}

#[test]
fn compare_emits_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["gen", "--preset", "hard", "--out", "hard"], d);
    ok(&["compare", "--dataset", "hard", "--out", "c1", "--steps", "6"], d);
    ok(&["compare", "--dataset", "hard", "--out", "c2", "--steps", "6"], d);
    let csv = fs::read_to_string(d.join("c1/compare.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(d.join("c2/compare.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,test_acc,train_acc,steps");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["ViT", "ViT+FF+SAWS", "ViT+FF+MAWS"]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",6")));
}

#[test]
fn config_layers_defaults_file_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.json"), r#"{"model": {"k": 2, "embed_dim": 16}, "train": {"lr0": 0.1}}"#).unwrap();
    let text = ok(&["config", "--config", "run.json", "--k", "3"], d);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["model"]["k"], 3);
    assert_eq!(v["model"]["embed_dim"], 16);
    assert_eq!(v["train"]["lr0"], 0.1);
    assert_eq!(v["train"]["momentum"], 0.9);

    fs::write(d.join("round.json"), &text).unwrap();
    assert_eq!(ok(&["config", "--config", "round.json"], d), text);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(ffvt(&["train", "--dataset", "missing", "--out", "o"], d).status.code(), Some(1));
    assert_eq!(ffvt(&["train", "--bogus"], d).status.code(), Some(1));
    assert_eq!(ffvt(&["train", "--k", "0"], d).status.code(), Some(1));
    fs::write(d.join("bad.json"), r#"{"model": {"kk": 1}}"#).unwrap();
    assert_eq!(ffvt(&["config", "--config", "bad.json"], d).status.code(), Some(1));
    let stderr = String::from_utf8(ffvt(&["train", "--dataset", "missing", "--out", "o"], d).stderr).unwrap();
    assert!(stderr.contains("no dataset at missing"), "{stderr}");
    assert_eq!(ffvt(&["--help"], d).status.code(), Some(0));
}

#[test]
fn gradcheck_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let good = ffvt(&["gradcheck"], d);
    assert_eq!(good.status.code(), Some(0));
    let report = String::from_utf8(good.stdout).unwrap();
    assert!(report.contains("0 failed"));
    assert!(report.lines().filter(|l| l.starts_with("ok")).count() >= 17);

    let bad = ffvt(&["gradcheck", "--inject-fault", "flip-matmul"], d);
    assert_ne!(bad.status.code(), Some(0));
    assert!(String::from_utf8(bad.stdout).unwrap().contains("FAIL matmul"));
}
