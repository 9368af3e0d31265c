//! When the weights are not published, query the model's confidence scores,
//! invert the sigmoid and solve for the weights, then steal λ from those.
//!
//! cargo run --example unknown_params

use hypersteal::attack::OracleKind;
use hypersteal::models::sigmoid;
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let ds = synth_logistic(100, 5, 0.5, 42)?;
    let spec = AlgorithmSpec::new(Algorithm::L2Logistic);
    let hp = Hyperparams::new(0.3);
    let cfg = TrainConfig::default();
    let secret = train(&spec, &hp, &ds, None, &cfg)?;
    let w = secret.primal_w().expect("linear model").clone();

    let mut queries = 0;
    let oracle = |x: &nalgebra::DVector<f64>| {
        queries += 1;
        sigmoid(w.dot(x))
    };
    let w_hat = steal_model_parameters(oracle, OracleKind::LogisticWithConfidence, ds.m(), 2 * ds.m(), 1)?;
    println!("{queries} queries, max weight error {:.2e}", (&w_hat - &w).amax());

    let report = steal(&spec, Some(&hp), &ModelParams::primal(w_hat), &ds, None, &cfg.masking)?;
    println!(
        "λ = {}, estimated {:.10}, relative error {:.2e}",
        hp.lambda,
        report.lambda_hat.lambda,
        report.max_relative_error().unwrap_or(f64::NAN)
    );
    Ok(())
}
