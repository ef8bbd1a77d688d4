//! Runs the finite-difference suite, then again with a sign flip injected
//! into the matmul backward pass to show the check catching it.

use ffvt::autodiff::Fault;
use ffvt::verify::run_suite;

fn main() -> ffvt::Result<()> {
    for fault in [None, Some(Fault::FlipMatmulBackward)] {
        let report = run_suite(0, fault)?;
        println!("fault: {fault:?}");
        for c in &report.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            println!(
                "  {tag} {:<14} {:.2e} (tol {:.0e}, {} coords)",
                c.name, c.max_rel_error, c.tolerance, c.coordinates
            );
        }
        println!("  {} failed, {:.2}s\n", report.failures(), report.elapsed.as_secs_f64());
    }
    Ok(())
}
