//! Finite-difference verification of every differentiable op and of the
//! whole model, in f64.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Fault, Tape, Var};
use crate::error::Result;
use crate::gradcheck::GradChecker;
use crate::model::{ffvt_forward_tape, Ffvt};
use crate::tensor::Tensor;
use crate::vit::{random_tensor, ModelConfig, SelectorKind, LN_EPS};

pub const OP_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Step for ops that are linear in every input coordinate. Central
/// differences are exact there, so a large step only reduces rounding.
pub const LINEAR_STEP: f64 = 1e-3;
/// Step for the curved ops (softmax, layer norm, GELU, cross-entropy).
pub const CURVED_STEP: f64 = 2e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckReport>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

struct OpCase {
    name: &'static str,
    step: f64,
    inputs: Vec<Tensor<f64>>,
    f: OpFn,
}

/// `Σ y ⊙ r` for a fixed random `r` with `0.5 ≤ |r| ≤ 1.5`, so no gradient
/// is trivially zero.
fn weighted(tape: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = tape.constant(r.clone());
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let mut dim = |lo: usize| rng.gen_range(lo..=16usize);
    let (m, k, n) = (dim(1), dim(1), dim(2));
    let (rows, start) = (dim(1), 0);
    // width 2 normalizes every row to ±1, whose gradient is below what
    // central differences can resolve
    let w = dim(3);
    let mut rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut t = |shape: &[usize]| random_tensor::<f64>(&mut rng, shape, 1.0);

    let mut cases = Vec::new();
    macro_rules! case {
        ($name:expr, $step:expr, [$($inp:expr),*], $out_shape:expr, |$tape:ident, $v:ident| $body:expr) => {{
            let r = t(&$out_shape).map(|v| v.signum() * (0.5 + v.abs()));
            cases.push(OpCase {
                name: $name,
                step: $step,
                inputs: vec![$($inp),*],
                f: Box::new(move |$tape: &mut Tape<f64>, $v: &[Var]| {
                    let y = $body?;
                    weighted($tape, y, &r)
                }),
            });
        }};
    }
    let (a_mk, b_kn) = (t(&[m, k]), t(&[k, n]));
    case!("matmul", LINEAR_STEP, [a_mk, b_kn], [m, n], |tape, v| tape.matmul(v[0], v[1]));
    case!("transpose", LINEAR_STEP, [t(&[m, n])], [n, m], |tape, v| tape.transpose(v[0]));
    case!("add", LINEAR_STEP, [t(&[m, n]), t(&[m, n])], [m, n], |tape, v| tape.add(v[0], v[1]));
    case!("mul", LINEAR_STEP, [t(&[m, n]), t(&[m, n])], [m, n], |tape, v| tape.mul(v[0], v[1]));
    case!("add_row", LINEAR_STEP, [t(&[m, n]), t(&[n])], [m, n], |tape, v| tape.add_row(v[0], v[1]));
    case!("scale", LINEAR_STEP, [t(&[m, n])], [m, n], |tape, v| tape.scale(v[0], -0.37));
    case!("softmax", CURVED_STEP, [t(&[m, n])], [m, n], |tape, v| tape.softmax(v[0]));
    case!("layer_norm", CURVED_STEP, [t(&[m, w]), t(&[w]), t(&[w])], [m, w], |tape, v| tape
        .layer_norm(v[0], v[1], v[2], LN_EPS));
    case!("gelu", CURVED_STEP, [t(&[m, n])], [m, n], |tape, v| tape.gelu(v[0]));
    case!("reshape", LINEAR_STEP, [t(&[m, n])], [n, m], |tape, v| tape.reshape(v[0], &[n, m]));
    let picks: Vec<usize> = (0..rows).map(|i| (i * 7 + 3) % m).collect();
    case!("gather_rows", LINEAR_STEP, [t(&[m, n])], [rows, n], |tape, v| tape.gather_rows(v[0], &picks));
    case!("concat_rows", LINEAR_STEP, [t(&[m, n]), t(&[k, n])], [m + k, n], |tape, v| tape.concat_rows(&[v[0], v[1]]));
    let len = n - 1;
    case!("slice_cols", LINEAR_STEP, [t(&[m, n])], [m, len], |tape, v| tape.slice_cols(v[0], start + 1, len));
    case!("concat_cols", LINEAR_STEP, [t(&[m, n]), t(&[m, k])], [m, n + k], |tape, v| tape.concat_cols(&[v[0], v[1]]));
    let label = (m * 5) % n;
    case!("cross_entropy", CURVED_STEP, [t(&[n])], [], |tape, v| tape.cross_entropy(v[0], label));
    case!("sum", LINEAR_STEP, [t(&[m, n])], [], |tape, v| tape.sum(v[0]));
    cases
}

fn report(name: &str, reports: &[crate::gradcheck::InputReport], coords: usize, tol: f64) -> CheckReport {
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    CheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        tolerance: tol,
        coordinates: coords,
        passed: worst < tol,
    }
}

/// Checks every differentiable op once at shapes drawn from `seed`.
pub fn check_ops(seed: u64, fault: Option<Fault>) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases(&mut rng)
        .into_iter()
        .map(|case| {
            let checker = GradChecker::new(case.step).with_fault(fault);
            let reports = checker.check(&case.f, &case.inputs)?;
            let coords = case.inputs.iter().map(Tensor::numel).sum();
            Ok(report(case.name, &reports, coords, OP_TOLERANCE))
        })
        .collect()
}

/// The small end-to-end configuration: L=2, D=8, N=4, K=2.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        image_h: 16,
        image_w: 16,
        channels: 3,
        patch_size: 8,
        embed_dim: 8,
        layers: 2,
        heads: 2,
        mlp_dim: 16,
        k: 2,
        selector: SelectorKind::Maws,
        num_classes: 3,
        head_depth: 1,
        seed: 11,
    }
}

/// Cross-entropy of the full model against every parameter, with the
/// selected indices frozen at their unperturbed values.
pub fn check_model(cfg: &ModelConfig, seed: u64, fault: Option<Fault>) -> Result<CheckReport> {
    let model = Ffvt::<f64>::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = random_tensor::<f64>(&mut rng, &[cfg.image_h, cfg.image_w, cfg.channels], 1.0);
    let label = rng.gen_range(0..cfg.num_classes);
    let frozen = model.forward(&image)?.selections;
    let inputs: Vec<Tensor<f64>> = model.params.named().into_iter().map(|(_, t)| t.clone()).collect();

    let f = |tape: &mut Tape<f64>, vars: &[Var]| {
        let mut it = vars.iter().copied();
        let params = model.params.map(|_| it.next().expect("one var per parameter"));
        let fwd = ffvt_forward_tape(tape, &model.config, &params, &image, Some(&frozen))?;
        tape.cross_entropy(fwd.logits, label)
    };
    let reports = GradChecker::default().with_fault(fault).check(f, &inputs)?;
    let coords = inputs.iter().map(Tensor::numel).sum();
    Ok(report(&format!("ffvt[{}]", cfg.selector), &reports, coords, MODEL_TOLERANCE))
}

/// All op checks plus the end-to-end toy model under both selectors.
pub fn run_suite(seed: u64, fault: Option<Fault>) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut checks = check_ops(seed, fault)?;
    let mut cfg = toy_config();
    for kind in [SelectorKind::Maws, SelectorKind::Saws] {
        cfg.selector = kind;
        checks.push(check_model(&cfg, seed, fault)?);
    }
    Ok(SuiteReport { checks, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ops_pass_at_seed_zero() {
        for c in check_ops(0, None).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn flipped_matmul_fails_matmul_case() {
        let reports = check_ops(0, Some(Fault::FlipMatmulBackward)).unwrap();
        let mm = reports.iter().find(|c| c.name == "matmul").unwrap();
        assert!(!mm.passed);
        assert!(reports.iter().filter(|c| c.name != "matmul").all(|c| c.passed));
    }

    #[test]
    fn toy_model_passes() {
        let r = check_model(&toy_config(), 3, None).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
