//! Central finite-difference oracle for tape gradients.

use crate::autodiff::{Fault, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Worst disagreement found for one input tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, Copy)]
pub struct GradChecker {
    pub step: f64,
    pub fault: Option<Fault>,
}

impl Default for GradChecker {
    fn default() -> Self {
        GradChecker { step: 1e-5, fault: None }
    }
}

impl GradChecker {
    pub fn new(step: f64) -> Self {
        GradChecker { step, ..Default::default() }
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    fn eval<T, F>(&self, f: &F, inputs: &[Tensor<T>]) -> Result<T>
    where
        T: Scalar,
        F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    }

    /// Compares tape gradients of the scalar `f` against central differences
    /// for every coordinate of every input. Returns one report per input.
    pub fn check<T, F>(&self, f: F, inputs: &[Tensor<T>]) -> Result<Vec<InputReport>>
    where
        T: Scalar,
        F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    {
        if !(self.step > 0.0) {
            return Err(Error::config("finite-difference step must be positive"));
        }
        let base = self.eval(&f, inputs)?;
        let again = self.eval(&f, inputs)?;
        if base.to_f64().map(f64::to_bits) != again.to_f64().map(f64::to_bits) {
            return Err(Error::Oracle(format!("function is not deterministic: {base} then {again}")));
        }

        let mut tape = Tape::with_fault(self.fault);
        let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let grads = tape.backward(out)?;

        let h = T::from_f64_lossy(self.step);
        let two_h = 2.0 * self.step;
        let mut reports = Vec::with_capacity(inputs.len());
        let mut work: Vec<Tensor<T>> = inputs.to_vec();
        for (k, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var);
            let mut report = InputReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
            for i in 0..inputs[k].numel() {
                let orig = inputs[k].data()[i];
                work[k].data_mut()[i] = orig + h;
                let plus = self.eval(&f, &work)?;
                work[k].data_mut()[i] = orig - h;
                let minus = self.eval(&f, &work)?;
                work[k].data_mut()[i] = orig;
                let numeric = (plus - minus).to_f64().unwrap() / two_h;
                let a = analytic.data()[i].to_f64().unwrap();
                let err = relative_error(a, numeric);
                if err > report.max_rel_error || i == 0 {
                    report = InputReport { max_rel_error: err, worst_index: i, analytic: a, numeric };
                }
            }
            reports.push(report);
        }
        Ok(reports)
    }

    /// Single-input convenience; returns the worst relative error.
    pub fn check_one<T, F>(&self, f: F, x: &Tensor<T>) -> Result<f64>
    where
        T: Scalar,
        F: Fn(&mut Tape<T>, Var) -> Result<Var>,
    {
        let reports = self.check(|tape: &mut Tape<T>, v: &[Var]| f(tape, v[0]), std::slice::from_ref(x))?;
        Ok(reports[0].max_rel_error)
    }
}

/// Worst relative error between the tape gradient of `f` at `x` and central
/// differences with step `h`.
pub fn finite_diff_check<T, F>(f: F, x: &Tensor<T>, h: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    GradChecker::new(h).check_one(f, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new([3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let w = Tensor::new([3], vec![2.0, -3.0, 0.25]).unwrap();
        let err = finite_diff_check(
            |tape, x| {
                let w = tape.constant(w.clone());
                let p = tape.mul(x, w)?;
                tape.sum(p)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new([3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let err = finite_diff_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                tape.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn nondeterminism_is_detected() {
        let calls = Cell::new(0u32);
        let x = Tensor::new([2], vec![1.0f64, 2.0]).unwrap();
        let err = finite_diff_check(
            |tape, x| {
                calls.set(calls.get() + 1);
                let s = tape.scale(x, 1.0 + calls.get() as f64)?;
                tape.sum(s)
            },
            &x,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Oracle(_)));
    }

    #[test]
    fn flipped_matmul_rule_is_caught() {
        let a = Tensor::new([2, 2], vec![1.0f64, 2.0, -0.5, 0.3]).unwrap();
        let b = Tensor::new([2, 2], vec![0.7f64, -1.1, 0.2, 0.9]).unwrap();
        let f = |tape: &mut Tape<f64>, v: &[Var]| {
            let m = tape.matmul(v[0], v[1])?;
            tape.sum(m)
        };
        let ok = GradChecker::default().check(f, &[a.clone(), b.clone()]).unwrap();
        assert!(ok.iter().all(|r| r.max_rel_error < 1e-8));
        let bad = GradChecker::default().with_fault(Some(Fault::FlipMatmulBackward)).check(f, &[a, b]).unwrap();
        assert!(bad.iter().all(|r| r.max_rel_error > 1.0));
    }
}
