//! Compares every analytic gradient with central finite differences.

use goodat::gradcheck::{all_checks, run_checks, DEFAULT_POINTS, REL_TOL};

fn main() -> goodat::Result<()> {
    let results = run_checks(&all_checks()?, DEFAULT_POINTS, 0)?;
    for r in &results {
        println!(
            "{:<18} {}  worst rel {:.2e}  worst abs {:.2e}",
            r.name,
            if r.passed { "ok  " } else { "FAIL" },
            r.worst_rel_error,
            r.worst_abs_error
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed (tolerance {REL_TOL:e})", results.len());
    std::process::exit(i32::from(failed > 0));
}
