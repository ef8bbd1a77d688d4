//! The `ffvt` command-line tool.
//!
//! Settings are layered: built-in defaults, then `--preset`, then the JSON
//! file given by `--config`, then individual flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autodiff::Fault;
use crate::data::{augment, generate_synth, load_dataset, save_dataset, Dataset, Mode, SynthSpec};
use crate::error::{Error, Result};
use crate::model::Ffvt;
use crate::select::{write_jsonl, SelectionResult};
use crate::tensor::{ftz, Tensor};
use crate::train::{evaluate, train_with, EvalReport, TrainLog};
use crate::verify::run_suite;
use crate::vit::{ModelConfig, SelectorKind};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs, in the same shape as the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: crate::train::TrainConfig,
    pub synth: SynthSpec,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()
    }
}

#[derive(Parser, Debug)]
#[command(name = "ffvt", version, about = "Feature-fusion vision transformer toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset into --out (or --dataset).
    Gen(Flags),
    /// Train one variant on --dataset; writes checkpoint and log.csv to --out.
    Train(Flags),
    /// Evaluate --checkpoint on the test split of --dataset.
    Eval(Flags),
    /// Train the ViT, +SAWS and +MAWS arms with identical seeds.
    Compare(Flags),
    /// Dump selections, attention and logits for one image.
    Inspect(Flags),
    /// Run the finite-difference gradient suite.
    Gradcheck(Flags),
    /// Print the fully resolved configuration as JSON.
    Config(Flags),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Easy,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultFlag {
    FlipMatmul,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long, value_parser = parse_selector)]
    pub selector: Option<SelectorKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub mlp_dim: Option<usize>,
    #[arg(long)]
    pub head_depth: Option<usize>,
    /// Number of classes, for both the generator and the model.
    #[arg(long)]
    pub classes: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Master seed for data, init, shuffling and augmentation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub no_flip: bool,

    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,

    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,

    /// Image tensor (H×W×C FTZ) for inspect.
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    /// Test-split index for inspect when no --image is given.
    #[arg(long)]
    pub index: Option<usize>,
    /// Also dump the fused sequence and per-head attention.
    #[arg(long)]
    pub trace: bool,

    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultFlag>,
}

fn parse_selector(s: &str) -> std::result::Result<SelectorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Applies preset, config file and flags on top of the defaults.
pub fn resolve(flags: &Flags) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    match flags.preset {
        Some(Preset::Easy) => rc.synth = SynthSpec::easy(),
        Some(Preset::Hard) => rc.synth = SynthSpec::hard(),
        None => {}
    }
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&rc)?;
        merge(&mut base, file);
        rc = serde_json::from_value(base).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    apply_flags(&mut rc, flags);
    rc.validate()?;
    Ok(rc)
}

/// Recursively overlays `top` onto `base`; non-object values replace.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_flags(rc: &mut RunConfig, f: &Flags) {
    let m = &mut rc.model;
    set(&mut m.selector, f.selector);
    set(&mut m.k, f.k);
    set(&mut m.layers, f.layers);
    set(&mut m.embed_dim, f.dim);
    set(&mut m.heads, f.heads);
    set(&mut m.patch_size, f.patch);
    set(&mut m.mlp_dim, f.mlp_dim);
    set(&mut m.head_depth, f.head_depth);
    if let Some(c) = f.classes {
        m.num_classes = c;
        rc.synth.num_classes = c;
    }
    if let Some(s) = f.image_size {
        m.image_h = s;
        m.image_w = s;
        rc.synth.image_size = s;
        rc.train.augment.crop_size = s;
        rc.train.augment.resize_to = s;
    }
    let t = &mut rc.train;
    set(&mut t.lr0, f.lr);
    set(&mut t.momentum, f.momentum);
    set(&mut t.total_steps, f.steps);
    set(&mut t.batch_size, f.batch);
    if let Some(c) = f.clip_norm {
        t.clip_norm = (c > 0.0).then_some(c);
    }
    if f.no_flip {
        t.augment.flip = false;
    }
    if let Some(s) = f.seed {
        t.seed = s;
        m.seed = s;
        rc.synth.seed = s;
    }
    let s = &mut rc.synth;
    set(&mut s.train_per_class, f.train_per_class);
    set(&mut s.test_per_class, f.test_per_class);
    set(&mut s.signal_amplitude, f.amplitude);
    set(&mut s.noise_std, f.noise);
    let p = &mut rc.paths;
    if f.dataset.is_some() {
        p.dataset = f.dataset.clone();
    }
    if f.out.is_some() {
        p.out = f.out.clone();
    }
    if f.checkpoint.is_some() {
        p.checkpoint = f.checkpoint.clone();
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Usage(format!("{cmd} needs {flag}")))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn open_dataset(rc: &RunConfig, cmd: &str) -> Result<Dataset> {
    let dir = require(&rc.paths.dataset, "--dataset", cmd)?;
    let data = load_dataset(dir)?;
    if data.num_classes() != rc.model.num_classes {
        return Err(Error::config(format!(
            "dataset at {} has {} classes but the model is configured for {} (set --classes)",
            dir.display(),
            data.num_classes(),
            rc.model.num_classes
        )));
    }
    Ok(data)
}

fn cmd_gen(rc: &RunConfig, out: &mut String) -> Result<()> {
    let dir = rc
        .paths
        .out
        .as_deref()
        .or(rc.paths.dataset.as_deref())
        .ok_or_else(|| Error::Usage("gen needs --out or --dataset".into()))?;
    let data = generate_synth(&rc.synth)?;
    save_dataset(dir, &data)?;
    writeln!(
        out,
        "wrote {} train + {} test images ({} classes) to {}",
        data.train.len(),
        data.test.len(),
        data.num_classes(),
        dir.display()
    )
    .unwrap();
    Ok(())
}

struct Trained {
    model: Ffvt<f32>,
    log: TrainLog,
    train_acc: EvalReport,
    test_acc: EvalReport,
}

fn train_arm(rc: &RunConfig, data: &Dataset, dir: &Path, out: &mut String) -> Result<Trained> {
    let mut model = Ffvt::<f32>::new(rc.model.clone())?;
    let every = (rc.train.total_steps / 10).max(1);
    let mut progress = String::new();
    let log = train_with(&mut model, &data.train, &rc.train, |s| {
        if s.step % every == 0 || s.step + 1 == rc.train.total_steps {
            writeln!(progress, "  step {:5}  lr {:.5}  loss {:.4}  acc {:.3}", s.step, s.lr, s.loss, s.acc).unwrap();
        }
    })?;
    out.push_str(&progress);
    write_file(&dir.join("log.csv"), log.to_csv())?;
    model.save(dir.join("checkpoint"))?;
    let train_acc = evaluate(&model, &data.train, &rc.train.augment)?;
    let test_acc = evaluate(&model, &data.test, &rc.train.augment)?;
    write_file(
        &dir.join("metrics.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "train": train_acc,
            "test": test_acc,
            "initial_loss": log.initial_loss(),
        }))?,
    )?;
    Ok(Trained { model, log, train_acc, test_acc })
}

fn cmd_train(rc: &RunConfig, out: &mut String) -> Result<()> {
    let dir = require(&rc.paths.out, "--out", "train")?;
    let data = open_dataset(rc, "train")?;
    write_file(&dir.join("config.json"), rc.to_json())?;
    writeln!(out, "training {} for {} steps", rc.model.selector, rc.train.total_steps).unwrap();
    let t = train_arm(rc, &data, dir, out)?;
    writeln!(out, "{} parameters", t.model.num_params()).unwrap();
    writeln!(out, "train accuracy: {:.4}", t.train_acc.accuracy).unwrap();
    writeln!(out, "test accuracy: {:.4}", t.test_acc.accuracy).unwrap();
    Ok(())
}

fn checkpoint_dir(rc: &RunConfig, cmd: &str) -> Result<PathBuf> {
    match (&rc.paths.checkpoint, &rc.paths.out) {
        (Some(c), _) => Ok(c.clone()),
        (None, Some(o)) => Ok(o.join("checkpoint")),
        _ => Err(Error::Usage(format!("{cmd} needs --checkpoint"))),
    }
}

/// Loads a checkpoint; explicit architecture flags must agree with it, while
/// the selector and K may be changed freely.
fn open_checkpoint(flags: &Flags, rc: &RunConfig, cmd: &str) -> Result<Ffvt<f32>> {
    let dir = checkpoint_dir(rc, cmd)?;
    let mut model = Ffvt::<f32>::load(&dir)?;
    let c = &model.config;
    let checks = [
        ("--layers", flags.layers, c.layers),
        ("--dim", flags.dim, c.embed_dim),
        ("--heads", flags.heads, c.heads),
        ("--patch", flags.patch, c.patch_size),
        ("--image-size", flags.image_size, c.image_h),
        ("--mlp-dim", flags.mlp_dim, c.mlp_dim),
        ("--head-depth", flags.head_depth, c.head_depth),
        ("--classes", flags.classes, c.num_classes),
    ];
    for (flag, given, stored) in checks {
        if let Some(g) = given {
            if g != stored {
                return Err(Error::config(format!(
                    "{flag} {g} does not match checkpoint {} ({stored})",
                    dir.display()
                )));
            }
        }
    }
    set(&mut model.config.selector, flags.selector);
    set(&mut model.config.k, flags.k);
    model.config.validate()?;
    Ok(model)
}

fn cmd_eval(flags: &Flags, rc: &RunConfig, out: &mut String) -> Result<()> {
    let model = open_checkpoint(flags, rc, "eval")?;
    let dir = require(&rc.paths.dataset, "--dataset", "eval")?;
    let data = load_dataset(dir)?;
    let mut aug = rc.train.augment.clone();
    aug.crop_size = model.config.image_h;
    let report = evaluate(&model, &data.test, &aug)?;
    writeln!(out, "test accuracy: {:.4} ({}/{})", report.accuracy, report.correct, report.total).unwrap();
    writeln!(out, "mean loss: {:.4}", report.mean_loss).unwrap();
    for (c, a) in report.per_class.iter().enumerate() {
        writeln!(out, "  class {c}: {a:.4}").unwrap();
    }
    if let Some(o) = &rc.paths.out {
        write_file(&o.join("eval.json"), serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

pub const VARIANTS: [(&str, SelectorKind); 3] =
    [("ViT", SelectorKind::None), ("ViT+FF+SAWS", SelectorKind::Saws), ("ViT+FF+MAWS", SelectorKind::Maws)];

fn cmd_compare(rc: &RunConfig, out: &mut String) -> Result<()> {
    let dir = require(&rc.paths.out, "--out", "compare")?;
    let data = open_dataset(rc, "compare")?;
    write_file(&dir.join("config.json"), rc.to_json())?;
    let mut csv = String::from("variant,test_acc,train_acc,steps\n");
    let mut table = String::new();
    for (name, kind) in VARIANTS {
        let mut arm = rc.clone();
        arm.model.selector = kind;
        writeln!(out, "{name}").unwrap();
        let t = train_arm(&arm, &data, &dir.join(kind.as_str().to_lowercase()), out)?;
        writeln!(csv, "{name},{},{},{}", t.test_acc.accuracy, t.train_acc.accuracy, rc.train.total_steps).unwrap();
        writeln!(
            table,
            "{name:<14} {:>8.4} {:>9.4} {:>6}  (initial loss {:.6})",
            t.test_acc.accuracy,
            t.train_acc.accuracy,
            rc.train.total_steps,
            t.log.initial_loss().unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    write_file(&dir.join("compare.csv"), &csv)?;
    writeln!(out, "{:<14} {:>8} {:>9} {:>6}", "variant", "test_acc", "train_acc", "steps").unwrap();
    out.push_str(&table);
    Ok(())
}

fn inspect_image(flags: &Flags, rc: &RunConfig, model: &Ffvt<f32>) -> Result<(Tensor<f32>, Option<usize>)> {
    if let Some(p) = &flags.image {
        return Ok((ftz::read(p)?, None));
    }
    let dir = rc.paths.dataset.as_deref().ok_or_else(|| Error::Usage("inspect needs --image or --dataset".into()))?;
    let data = load_dataset(dir)?;
    let i = flags.index.unwrap_or(0);
    let s = data
        .test
        .samples
        .get(i)
        .ok_or_else(|| Error::Usage(format!("--index {i} out of range ({} test images)", data.test.len())))?;
    let mut aug = rc.train.augment.clone();
    aug.crop_size = model.config.image_h;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok((augment(&s.image, &aug, Mode::Eval, &mut rng)?, Some(s.label)))
}

fn cmd_inspect(flags: &Flags, rc: &RunConfig, out: &mut String) -> Result<()> {
    let model = open_checkpoint(flags, rc, "inspect")?;
    let dir = require(&rc.paths.out, "--out", "inspect")?;
    let (image, label) = inspect_image(flags, rc, &model)?;
    let fwd = model.forward(&image)?;
    fs::create_dir_all(dir.join("attention")).map_err(|e| Error::io(dir, e))?;
    write_jsonl(dir.join("selection.jsonl"), &fwd.selections)?;
    for rec in &fwd.trace.attention {
        ftz::write(dir.join(format!("attention/layer_{}.ftz", rec.layer_index)), &rec.scores)?;
        if flags.trace {
            for (h, m) in rec.per_head.iter().enumerate() {
                ftz::write(dir.join(format!("attention/layer_{}_head_{h}.ftz", rec.layer_index)), m)?;
            }
        }
    }
    ftz::write(dir.join("logits.ftz"), &fwd.logits)?;
    let predicted = fwd.logits.argmax();
    if flags.trace {
        ftz::write(dir.join("fused.ftz"), &fwd.fused.tokens)?;
        write_file(&dir.join("provenance.json"), serde_json::to_vec(&fwd.fused.provenance)?)?;
    }
    let logits: Vec<f64> = fwd.logits.to_f64_vec();
    write_file(
        &dir.join("prediction.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "predicted": predicted,
            "label": label,
            "logits": logits,
        }))?,
    )?;
    for s in &fwd.selections {
        writeln!(out, "{}", selection_line(s)).unwrap();
    }
    writeln!(out, "predicted class: {predicted}").unwrap();
    Ok(())
}

fn selection_line(s: &SelectionResult) -> String {
    format!("layer {:2} {}: {:?}", s.layer_index, s.kind, s.indices)
}

/// Returns the number of failed checks.
fn cmd_gradcheck(flags: &Flags, rc: &RunConfig, out: &mut String) -> Result<usize> {
    let fault = flags.inject_fault.map(|FaultFlag::FlipMatmul| Fault::FlipMatmulBackward);
    let report = run_suite(rc.train.seed, fault)?;
    for c in &report.checks {
        writeln!(
            out,
            "{} {:<16} max rel err {:.3e}  (tol {:.0e}, {} coords)",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.tolerance,
            c.coordinates
        )
        .unwrap();
    }
    writeln!(out, "{} checks, {} failed, {:.2}s", report.checks.len(), report.failures(), report.elapsed.as_secs_f64())
        .unwrap();
    if let Some(o) = &rc.paths.out {
        write_file(&o.join("gradcheck.json"), serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(report.failures())
}

/// Runs one parsed command, appending its report to `out`. Returns the
/// process exit code.
pub fn execute(cli: &Cli, out: &mut String) -> Result<i32> {
    let (Command::Gen(f)
    | Command::Train(f)
    | Command::Eval(f)
    | Command::Compare(f)
    | Command::Inspect(f)
    | Command::Gradcheck(f)
    | Command::Config(f)) = &cli.command;
    let rc = resolve(f)?;
    match &cli.command {
        Command::Gen(_) => cmd_gen(&rc, out)?,
        Command::Train(_) => cmd_train(&rc, out)?,
        Command::Eval(_) => cmd_eval(f, &rc, out)?,
        Command::Compare(_) => cmd_compare(&rc, out)?,
        Command::Inspect(_) => cmd_inspect(f, &rc, out)?,
        Command::Gradcheck(_) => {
            if cmd_gradcheck(f, &rc, out)? > 0 {
                return Ok(2);
            }
        }
        Command::Config(_) => {
            out.push_str(&rc.to_json());
            out.push('\n');
        }
    }
    Ok(0)
}

/// Parses `args`, runs the command, prints its output, and returns the exit
/// code: 0 on success, 1 for usage or configuration errors, 2 otherwise.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = String::new();
    let result = execute(&cli, &mut out);
    print!("{out}");
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ffvt: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(args: &[&str]) -> Flags {
        let mut v = vec!["ffvt", "config"];
        v.extend_from_slice(args);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Config(f) => f,
            _ => unreachable!(),
        }
    }

    #[test]
    fn config_round_trips() {
        let rc = resolve(&flags(&["--selector", "saws", "--k", "3", "--dataset", "d"])).unwrap();
        assert_eq!(RunConfig::from_json(&rc.to_json()).unwrap(), rc);
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"model": {"k": 2, "layers": 3}, "train": {"lr0": 0.5}}"#).unwrap();
        let ps = p.to_str().unwrap();
        let rc = resolve(&flags(&["--config", ps, "--k", "3"])).unwrap();
        assert_eq!(rc.model.k, 3);
        assert_eq!(rc.model.layers, 3);
        assert_eq!(rc.train.lr0, 0.5);
        assert_eq!(rc.model.embed_dim, ModelConfig::default().embed_dim);
    }

    #[test]
    fn unknown_config_field_is_config_error() {
        let e = RunConfig::from_json(r#"{"model": {"depth": 3}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn invalid_flag_values_fail_validation() {
        assert!(matches!(resolve(&flags(&["--k", "0"])), Err(Error::Config(_))));
        assert!(Cli::try_parse_from(["ffvt", "train", "--selector", "best"]).is_err());
    }

    #[test]
    fn image_size_propagates() {
        let rc = resolve(&flags(&["--image-size", "48", "--seed", "9"])).unwrap();
        assert_eq!((rc.model.image_h, rc.synth.image_size, rc.train.augment.crop_size), (48, 48, 48));
        assert_eq!((rc.model.seed, rc.train.seed, rc.synth.seed), (9, 9, 9));
    }

    #[test]
    fn file_overlays_preset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"synth": {"train_per_class": 2}}"#).unwrap();
        let rc = resolve(&flags(&["--preset", "hard", "--config", p.to_str().unwrap()])).unwrap();
        assert_eq!(rc.synth.train_per_class, 2);
        assert_eq!(rc.synth.noise_std, SynthSpec::hard().noise_std);
    }

    #[test]
    fn preset_hard() {
        let rc = resolve(&flags(&["--preset", "hard", "--noise", "0.1"])).unwrap();
        assert_eq!(rc.synth.signal_amplitude, SynthSpec::hard().signal_amplitude);
        assert_eq!(rc.synth.noise_std, 0.1);
    }
}
