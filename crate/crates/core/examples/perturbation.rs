//! Move one coefficient of an exact ridge solution away from the optimum
//! and watch the estimate drift, then compare the closed-form gradient of
//! the estimate with finite differences.
//!
//! cargo run --example perturbation

use hypersteal::defense::{grad_lambda_approx, lambda_hat_gradient_fd, perturbation_curve};
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let ds = preprocess(&load_csv(path, &TargetColumn::Last, Task::Regression)?, Task::Regression)?;
    let spec = AlgorithmSpec::new(Algorithm::Ridge);
    let hp = Hyperparams::new(1.0);
    let cfg = TrainConfig::default();

    let deltas: Vec<f64> = (0..7).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect();
    let curve = perturbation_curve(&spec, &hp, &ds, &cfg, 0, &deltas)?;
    println!("{:>10} {:>14} {:>12}", "delta", "|Δλ̂|", "|Δλ̂|/delta");
    for (d, e) in curve.deltas.iter().zip(&curve.abs_errors) {
        println!("{d:>10.1e} {e:>14.4e} {:>12.6e}", e / d);
    }
    println!("fit: {:.4e}·δ + {:.4e}·δ²", curve.fitted_slope, curve.fitted_quadratic);

    // A small, well-conditioned problem where the closed form is accurate.
    let small = synth_regression(20, 5, 0.1, 3)?;
    let hp = Hyperparams::new(0.01);
    let params = train(&spec, &hp, &small, None, &cfg)?;
    let approx = grad_lambda_approx(&spec, &params, &small, None, &cfg.masking)?;
    let fd = lambda_hat_gradient_fd(&spec, &params, &small, None, &cfg.masking, 1e-6)?;
    println!("closed form     {:?}", approx.as_slice());
    println!("finite diffs    {:?}", fd.as_slice());
    Ok(())
}
