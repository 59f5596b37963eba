//! Fit a model bundle from a configuration, round-trip it through JSON and
//! predict with several methods.

use nalgebra::{DMatrix, DVector};
use nested_kriging::{Dataset, Method, ModelBundle, RunConfig};

const CONFIG: &str = r#"
seed = 2

[kernel]
family = "matern32"
lengthscales = [0.25, 0.25]

[tree]
mode = "optimal"
height = 3
"#;

fn main() -> nested_kriging::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let n = 600;
    let x = DMatrix::from_fn(n, 2, |i, j| ((i * (7 + 6 * j) + 3 * j) % n) as f64 / n as f64);
    let y = DVector::from_fn(n, |i, _| 3.0 + x[(i, 0)] * (4.0 * x[(i, 1)]).sin());
    let data = Dataset::new(x, y)?;

    let (bundle, _) = ModelBundle::fit(&data, vec!["a".into(), "b".into()], &cfg)?;
    let restored = ModelBundle::from_json(&bundle.to_json())?;
    println!("tree layer sizes {:?}, fingerprint {}", restored.tree.layer_sizes(), restored.fingerprint);

    let xq = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.5, 0.5, 0.9, 0.7]);
    for method in [Method::Nested, Method::Full, Method::Rbcm] {
        let preds = restored.predict(method, &xq, 5000)?;
        let line: Vec<String> = preds.iter().map(|p| format!("{:.4} ± {:.4}", p.mean, p.variance.sqrt())).collect();
        println!("{:<7} {}", method.name(), line.join("  "));
    }
    Ok(())
}
