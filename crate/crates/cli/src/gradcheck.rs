//! Finite-difference verification of every analytic surrogate gradient:
//! 4 surrogates x 3 policy families x randomized configurations.

use ppo_lab::surrogate::gradcheck::{run, GradcheckReport, DEFAULT_FD_STEP, DEFAULT_TOLERANCE};

pub struct GradcheckArgs {
    pub seed: u64,
    pub configs_per_cell: usize,
}

impl Default for GradcheckArgs {
    fn default() -> Self {
        GradcheckArgs {
            seed: 42,
            configs_per_cell: 100,
        }
    }
}

/// Run the suite and print one line per cell plus the exclusion count.
/// Returns the report; the caller maps `passed()` to the exit code.
pub fn run_gradcheck(args: &GradcheckArgs) -> anyhow::Result<GradcheckReport> {
    let report = run(
        args.seed,
        args.configs_per_cell,
        DEFAULT_TOLERANCE,
        DEFAULT_FD_STEP,
    )?;
    for cell in &report.cells {
        println!(
            "gradcheck {:>13?} x {:<8?} checked {:>3}  max_rel_err {:.3e}  {}",
            cell.surrogate,
            cell.family,
            cell.checked,
            cell.max_rel_err,
            if cell.max_rel_err <= report.tolerance {
                "ok"
            } else {
                "EXCEEDED"
            }
        );
    }
    println!(
        "gradcheck excluded {} mask-boundary configurations; tolerance {:.0e} at step {:.0e}",
        report.total_excluded(),
        report.tolerance,
        report.fd_step
    );
    Ok(report)
}
