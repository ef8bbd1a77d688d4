//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fail.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{case, permute, shift, sorted};
use ffvt::model::Ffvt;
use ffvt::select::{maws, saws};
use ffvt::verify::run_suite;
use ffvt::vit::{num_patches, patchify, random_tensor, ModelConfig, SelectorKind};
use ffvt::Tensor;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn m(rows: &[[f64; 4]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn gamma_regression() -> Outcome {
    let g = m(&[[1., 2., 3., 4.], [1., 2., 3., 4.], [1., 2., 3., 4.], [1., 4., 1., 1.]]);
    let s = saws(&g, 1).map_err(|e| e.to_string())?;
    ensure(s.indices == [3], || format!("SAWS picked {:?}", s.indices))?;

    let row: Vec<f64> = (0..4).map(|j| g.at(0, j).exp()).collect();
    let col: Vec<f64> = (0..4).map(|i| g.at(i, 0).exp()).collect();
    let (zr, zc): (f64, f64) = (row.iter().sum(), col.iter().sum());
    let mw = maws(&g, 3).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (&i, &w) in mw.indices.iter().zip(&mw.weights) {
        worst = worst.max((w - row[i] / zr * (col[i] / zc)).abs());
    }
    ensure(worst < 1e-7, || format!("MAWS weight error {worst:.3e}"))?;
    Ok(format!("SAWS(K=1) = {:?}, MAWS weights within {worst:.1e} of oracle", s.indices))
}

fn brute_force_top1(score: impl Fn(usize) -> f64, n: usize) -> usize {
    let mut best = 1;
    for i in 2..=n {
        if score(i) > score(best) {
            best = i;
        }
    }
    best
}

fn divergence() -> Outcome {
    let a = m(&[[1., 2., 3., 4.], [9., 0., 0., 0.], [1., 0., 0., 0.], [1., 0., 0., 0.]]);
    let start = Instant::now();
    let s = saws(&a, 1).map_err(|e| e.to_string())?;
    let w = maws(&a, 1).map_err(|e| e.to_string())?;
    let took = start.elapsed();

    let ex = |v: f64| v.exp();
    let zr: f64 = (0..4).map(|j| ex(a.at(0, j))).sum();
    let zc: f64 = (0..4).map(|i| ex(a.at(i, 0))).sum();
    let saws_oracle = brute_force_top1(|i| a.at(0, i), 3);
    let maws_oracle = brute_force_top1(|i| ex(a.at(0, i)) / zr * ex(a.at(i, 0)) / zc, 3);
    ensure(s.indices == [3] && saws_oracle == 3, || format!("SAWS {:?}, oracle {saws_oracle}", s.indices))?;
    ensure(w.indices == [1] && maws_oracle == 1, || format!("MAWS {:?}, oracle {maws_oracle}", w.indices))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!("SAWS {{3}}, MAWS {{1}} in {took:?}"))
}

fn fused_length_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let patch = [2usize, 4, 8][rng.gen_range(0..3)];
        let (gh, gw) = (rng.gen_range(1..=4usize), rng.gen_range(1..=4usize));
        let heads = rng.gen_range(1..=3usize);
        let n = gh * gw;
        let cfg = ModelConfig {
            image_h: gh * patch + rng.gen_range(0..patch),
            image_w: gw * patch,
            channels: rng.gen_range(1..=3),
            patch_size: patch,
            embed_dim: heads * rng.gen_range(1..=4usize),
            layers: rng.gen_range(2..=6),
            heads,
            mlp_dim: rng.gen_range(1..=16),
            k: rng.gen_range(1..=n),
            selector: if rng.gen_bool(0.5) { SelectorKind::Maws } else { SelectorKind::Saws },
            num_classes: rng.gen_range(2..=6),
            head_depth: rng.gen_range(1..=2),
            seed: rng.gen(),
        };
        let model = Ffvt::<f64>::new(cfg.clone()).map_err(|e| format!("trial {trial}: {e}"))?;
        let img = random_tensor::<f64>(&mut rng, &[cfg.image_h, cfg.image_w, cfg.channels], 1.0);
        let out = model.forward(&img).map_err(|e| format!("trial {trial}: {e}"))?;
        let rows = out.fused.tokens.shape()[0];
        ensure(rows == 1 + (cfg.layers - 1) * cfg.k, || format!("trial {trial}: {rows} rows for {cfg:?}"))?;
    }
    let big = ModelConfig { layers: 12, k: 12, embed_dim: 8, heads: 2, mlp_dim: 8, ..ModelConfig::default() };
    let model = Ffvt::<f32>::new(big.clone()).map_err(|e| e.to_string())?;
    let img = Tensor::<f32>::full([32, 32, 3], 0.25);
    let rows = model.forward(&img).map_err(|e| e.to_string())?.fused.tokens.shape()[0];
    ensure(rows == 133 && big.fused_len() == 133, || format!("L=12, K=12 gave {rows} rows"))?;
    Ok("50 random configs obey 1+(L-1)K; L=12, K=12 gives 133".into())
}

fn patch_count() -> Outcome {
    let n = num_patches(448, 448, 16);
    let p = patchify(&Tensor::<f32>::zeros([448, 448, 3]), 16).map_err(|e| e.to_string())?;
    ensure(n == 784 && p.shape() == [784, 768], || format!("N = {n}, patches {:?}", p.shape()))?;
    Ok("448x448 at P=16 gives N=784".into())
}

fn gradient_suite() -> Outcome {
    let report = run_suite(0, None).map_err(|e| e.to_string())?;
    let worst_op =
        report.checks.iter().filter(|c| !c.name.starts_with("ffvt")).map(|c| c.max_rel_error).fold(0.0, f64::max);
    let worst_model =
        report.checks.iter().filter(|c| c.name.starts_with("ffvt")).map(|c| c.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    ensure(failed.is_empty(), || format!("failed: {failed:?}"))?;
    ensure(report.elapsed < Duration::from_secs(120), || format!("took {:?}", report.elapsed))?;
    Ok(format!(
        "{} checks; ops max {worst_op:.1e} (< 1e-5), model max {worst_model:.1e} (< 1e-3), {:.2}s",
        report.checks.len(),
        report.elapsed.as_secs_f64()
    ))
}

fn baseline_equivalence() -> Outcome {
    let cfg = ModelConfig { selector: SelectorKind::None, seed: 7, ..ModelConfig::default() };
    let model = Ffvt::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let img = random_tensor::<f32>(&mut rng, &[32, 32, 3], 1.0);
        let a = model.logits(&img).map_err(|e| e.to_string())?;
        let b = model.plain_vit_forward(&img).map_err(|e| e.to_string())?;
        worst = worst.max(a.max_abs_diff(&b).map_err(|e| e.to_string())?);
    }
    ensure(worst < 1e-5, || format!("max diff {worst:.3e}"))?;
    Ok(format!("20 inputs, max |diff| = {worst:.1e}"))
}

fn selector_invariants() -> Outcome {
    let run = |name: &str, f: &dyn Fn(Tensor<f64>, usize, Vec<usize>, f64, f64) -> Result<(), TestCaseError>| {
        let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
        runner
            .run(&(case(), -3.0f64..3.0, -3.0f64..3.0), |((a, k, p), c1, c2)| f(a, k, p, c1, c2))
            .map_err(|e| format!("{name}: {e}"))
    };
    for (name, select) in [("SAWS", saws::<f64> as fn(&Tensor<f64>, usize) -> _), ("MAWS", maws::<f64>)] {
        run(&format!("{name} permutation"), &|a, k, perm, _, _| {
            let before = select(&a, k).unwrap().indices;
            let after = select(&permute(&a, &perm), k).unwrap().indices;
            let mapped = before.iter().map(|&i| perm[i - 1]).collect();
            proptest::prop_assert_eq!(sorted(after), sorted(mapped));
            Ok(())
        })?;
        run(&format!("{name} shift"), &|a, k, _, c1, c2| {
            let b = shift(&a, c1, c2);
            proptest::prop_assert_eq!(select(&a, k).unwrap().indices, select(&b, k).unwrap().indices);
            Ok(())
        })?;
    }
    Ok("permutation equivariance and shift invariance, 200 cases each for SAWS and MAWS".into())
}

fn bin(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_ffvt")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ffvt {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read(p: &Path) -> Result<String, String> {
    fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn training_smoke() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    bin(&["gen", "--preset", "easy", "--out", "easy"], d)?;
    let args = |out: &'static str| {
        vec![
            "train",
            "--dataset",
            "easy",
            "--out",
            out,
            "--selector",
            "maws",
            "--image-size",
            "32",
            "--patch",
            "8",
            "--dim",
            "32",
            "--layers",
            "4",
            "--heads",
            "4",
            "--k",
            "4",
            "--steps",
            "500",
        ]
    };
    let start = Instant::now();
    let stdout = bin(&args("a"), d)?;
    let took = start.elapsed();
    bin(&args("b"), d)?;
    let acc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("test accuracy: "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or("no test accuracy in output")?;
    let same = read(&d.join("a/log.csv"))? == read(&d.join("b/log.csv"))?;
    ensure(acc >= 0.95, || format!("test accuracy {acc}"))?;
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    ensure(same, || "reruns produced different loss CSVs".into())?;
    Ok(format!("test accuracy {acc:.3} after 500 steps in {:.1}s; rerun CSV identical", took.as_secs_f64()))
}

fn ablation_table() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    bin(&["gen", "--preset", "hard", "--out", "hard"], d)?;
    let stdout = bin(&["compare", "--dataset", "hard", "--out", "c1"], d)?;
    bin(&["compare", "--dataset", "hard", "--out", "c2"], d)?;
    let csv = read(&d.join("c1/compare.csv"))?;
    ensure(csv == read(&d.join("c2/compare.csv"))?, || "compare is not deterministic".into())?;
    let lines: Vec<&str> = csv.lines().collect();
    ensure(lines.len() == 4 && lines[0] == "variant,test_acc,train_acc,steps", || format!("bad table:\n{csv}"))?;
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap_or("")).collect();
    ensure(names == ["ViT", "ViT+FF+SAWS", "ViT+FF+MAWS"], || format!("rows {names:?}"))?;
    let table: Vec<&str> = stdout.lines().rev().take(4).collect::<Vec<_>>().into_iter().rev().collect();
    Ok(format!(
        "deterministic three-arm table\n{}",
        table.iter().map(|l| format!("        {l}")).collect::<Vec<_>>().join("\n")
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gamma-matrix regression", gamma_regression),
        ("MAWS/SAWS divergence", divergence),
        ("fused length law", fused_length_law),
        ("patch count", patch_count),
        ("gradient suite", gradient_suite),
        ("baseline equivalence", baseline_equivalence),
        ("selector invariants", selector_invariants),
        ("training smoke test", training_smoke),
        ("ablation structure", ablation_table),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
