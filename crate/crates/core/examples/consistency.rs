//! Error at a fixed point as the design grows, on a design built so that
//! naive expert combinations stop improving.

use nested_kriging::metrics::{run_consistency_demo, ConsistencySettings};
use nested_kriging::Method;

fn main() -> nested_kriging::Result<()> {
    let settings = ConsistencySettings::default();
    let ns = [50, 100, 200, 400];
    for method in [Method::Nested, Method::Bcm, Method::Poe] {
        let points = run_consistency_demo(&ns, method, &settings, 1)?;
        let line: Vec<String> = points.iter().map(|p| format!("n={}: {:.2e}", p.n, p.exact_mse)).collect();
        println!("{:<7} {}", method.name(), line.join("  "));
    }
    Ok(())
}
