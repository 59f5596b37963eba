//! Replicated one-dimensional comparison of the aggregation methods.

use nested_kriging::metrics::{run_benchmark_51, summarize};

fn main() -> nested_kriging::Result<()> {
    let reports = run_benchmark_51(7, 50)?;
    println!("{:<7} {:>10} {:>10} {:>10} {:>10}", "method", "MSE", "MVE", "MNLP", "MNSE");
    for s in summarize(&reports) {
        println!(
            "{:<7} {:>10.3e} {:>10.3e} {:>10.3} {:>10.3}",
            s.method.name(),
            s.median_mse,
            s.median_mve,
            s.median_mnlp,
            s.median_mnse
        );
    }
    Ok(())
}
