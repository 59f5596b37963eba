//! Plan aggregation trees of several heights and predict through them.

use nalgebra::{DMatrix, DVector};
use nested_kriging::data::partition_kmeans;
use nested_kriging::tree::{nested_predict_batch, PlanMode};
use nested_kriging::{plan_tree, Family, FullModel, KernelSpec, SubModelBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nested_kriging::Result<()> {
    for mode in [PlanMode::TwoLayerSqrt, PlanMode::Equilibrated(3), PlanMode::Optimal(2), PlanMode::Optimal(3)] {
        let plan = plan_tree(1024, mode)?;
        let cost = plan.tree.complexity(&vec![1024 / plan.groups; plan.groups], 1.0, 1.0);
        println!(
            "{mode:?}: p = {}, layer sizes {:?}, children {:?}, flops ~{:.2e}",
            plan.groups,
            plan.tree.layer_sizes(),
            plan.child_counts,
            cost.c_alpha
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1500;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(n, |i, _| (5.0 * x[(i, 0)]).sin() * (3.0 * x[(i, 1)]).cos());
    let kernel = KernelSpec::isotropic(Family::Matern52, 1.0, 0.3, 2)?;
    let xq = DMatrix::from_fn(200, 2, |_, _| rng.random::<f64>());
    let (m_full, _) = FullModel::fit(&kernel, &x, &y)?.predict(&xq)?;

    for mode in [PlanMode::TwoLayerSqrt, PlanMode::Optimal(3)] {
        let plan = plan_tree(n, mode)?;
        let bank = SubModelBank::new(&kernel, &x, &y, &partition_kmeans(&x, plan.groups, 0)?)?;
        let preds = nested_predict_batch(&bank, &plan.tree, &xq)?;
        let gap = preds.iter().zip(m_full.iter()).map(|(p, m)| (p.mean - m).powi(2)).sum::<f64>() / 200.0;
        println!("{mode:?}: height {}, mean squared gap to full model {gap:.3e}", plan.tree.height());
    }
    Ok(())
}
