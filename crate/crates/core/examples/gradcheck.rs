//! Analytic gradients against central differences for every op and unit.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use rse::cli::{all_suites, default_points, default_step, default_tolerance, run_suite};

fn main() -> rse::Result<()> {
    for name in all_suites() {
        let r = run_suite::<f64>(name, default_points(name), 0, default_step::<f64>())?;
        let tol = default_tolerance(name);
        println!(
            "{name:<16} {:>3} points  max rel err {:.2e}  {}",
            r.points,
            r.worst.max_rel_error,
            if r.passes(tol) { "ok" } else { "FAIL" }
        );
    }
    // Single precision is too coarse for a 1e-4 threshold.
    let r = run_suite::<f32>("gelu", 10, 0, default_step::<f32>())?;
    println!("gelu in f32      max rel err {:.2e}", r.worst.max_rel_error);
    Ok(())
}
