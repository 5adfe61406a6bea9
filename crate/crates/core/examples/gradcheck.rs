//! Runs the gradient verification suite and prints one line per check.
//! Pass `--fault` to corrupt the coefficient adjoint and watch it fail.

use tvlp::verify::{run_suite, Fault, SuiteConfig};

fn main() -> tvlp::Result<()> {
    let fault = std::env::args().any(|a| a == "--fault");
    let outcomes = run_suite(&SuiteConfig {
        fault: Fault {
            negate_coeff_grad: fault,
        },
        ..SuiteConfig::default()
    })?;
    for o in &outcomes {
        let verdict = if o.passed() { "ok" } else { "FAILED" };
        println!(
            "{:<36} {:>4} instances  max error {:.2e} < {:.0e}  {verdict}",
            o.name, o.instances, o.max_error, o.tolerance
        );
    }
    Ok(())
}
