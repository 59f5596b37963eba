//! Compare nested aggregation with the product-of-experts family at a few
//! points of one simulated sample.

use nalgebra::DMatrix;
use nested_kriging::data::partition_consecutive;
use nested_kriging::gp::sample_paths;
use nested_kriging::metrics::predict_from_layer_one;
use nested_kriging::{AggregationTree, Family, FullModel, KernelSpec, Method, SubModelBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nested_kriging::Result<()> {
    let kernel = KernelSpec::isotropic(Family::Matern52, 1.0, 0.05, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = DMatrix::from_fn(30, 1, |_, _| rng.random::<f64>());
    let y = sample_paths(&kernel, &x, 1, 5)?.row(0).transpose();

    let partition = partition_consecutive(&x, 15)?;
    let bank = SubModelBank::new(&kernel, &x, &y, &partition)?;
    let tree = AggregationTree::two_layer(15)?;
    let full = FullModel::fit(&kernel, &x, &y)?;

    for q in [0.13, 0.5, 0.91] {
        let l1 = bank.predict(&[q])?;
        let (mf, vf) = full.predict_point(&[q])?;
        println!("x = {q}: full mean {mf:.4} var {vf:.4}");
        for method in Method::ALL.iter().filter(|m| **m != Method::Full) {
            let (m, v) = predict_from_layer_one(*method, &l1, &tree)?;
            println!("  {:<7} mean {m:>8.4} var {v:>8.4}", method.name());
        }
    }
    Ok(())
}
