//! Aggregate two Kriging sub-models on a five-point design and compare with
//! the full model, including the diagnostics against it.

use nalgebra::{DMatrix, DVector};
use nested_kriging::aggregation::diagnostics_vs_full;
use nested_kriging::{Family, FullModel, KernelSpec, Partition, SubModelBank};

fn main() -> nested_kriging::Result<()> {
    let kernel = KernelSpec::isotropic(Family::SquaredExponential, 1.0, 0.2, 1)?;
    let xs = [0.0, 0.2, 0.4, 0.6, 0.8];
    let x = DMatrix::from_column_slice(5, 1, &xs);
    let y = DVector::from_iterator(5, xs.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin() + v));

    let partition = Partition::from_labels(vec![0, 0, 0, 1, 1], 2)?;
    let bank = SubModelBank::new(&kernel, &x, &y, &partition)?;
    let full = FullModel::fit(&kernel, &x, &y)?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}", "x", "M1", "M2", "aggregated", "full", "v_A-v_f");
    for i in 0..=12 {
        let q = [-0.1 + i as f64 * 0.1];
        let l1 = bank.predict(&q)?;
        let agg = l1.aggregate()?;
        let (m_full, v_full) = full.predict_point(&q)?;
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.2e}",
            q[0], l1.means[0], l1.means[1], agg.mean, m_full, agg.variance - v_full
        );
    }

    let d = diagnostics_vs_full(&full, &bank, &[0.5])?;
    println!("\nat x = 0.5: mean gap {:.3e}, variance gap {:.3e} <= bound {:.3e}", d.mean_gap, d.var_gap, d.bound);
    Ok(())
}
