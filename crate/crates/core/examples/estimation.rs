//! Estimate a length-scale by stochastic descent on the leave-one-out error
//! of the nested predictor, then the variance in closed form.

use nalgebra::DMatrix;
use nested_kriging::data::partition_consecutive;
use nested_kriging::estimation::{fit_sigma2, ml_grid_start, sgd_fit, SgdConfig};
use nested_kriging::gp::sample_paths;
use nested_kriging::{AggregationTree, Family, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nested_kriging::Result<()> {
    let truth = KernelSpec::isotropic(Family::Matern52, 2.0, 0.05, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(200, 1, |_, _| rng.random::<f64>());
    let y = sample_paths(&truth, &x, 1, 9)?.row(0).transpose();
    let partition = partition_consecutive(&x, 20)?;
    let tree = AggregationTree::two_layer(20)?;

    let model = truth.with_variance(1.0);
    let grid: Vec<f64> = (0..41).map(|i| 10f64.powf(-3.0 + 0.1 * i as f64)).collect();
    let start = ml_grid_start(&model, &x, &y, &partition, &grid)?;
    println!("sub-model likelihood start: theta = {start:.4}");

    let cfg = SgdConfig { theta0: vec![start], q: 50, n_iter: 300, seed: 1, log_criterion: true, ..SgdConfig::default() };
    let fit = sgd_fit(&model, &x, &y, &partition, &tree, &cfg)?;
    for step in fit.trace.iter().step_by(50) {
        println!("iter {:>3}: theta {:.4}, criterion {:.3e}", step.iteration, step.theta[0], step.criterion);
    }
    let sigma2 = fit_sigma2(&model.with_lengthscales(fit.theta.clone()), &x, &y, &partition, &tree)?;
    let sigma2_true_theta = fit_sigma2(&model, &x, &y, &partition, &tree)?;
    println!("estimate: theta {:.4} (true 0.05), sigma2 {sigma2:.3} (true 2)", fit.theta[0]);
    println!("sigma2 at the true theta: {sigma2_true_theta:.3}");
    Ok(())
}
