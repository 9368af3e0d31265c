//! Train ridge regression and LASSO on the diabetes data and read the
//! regularization weight back out of the learnt coefficients.
//!
//! cargo run --example steal_ridge

use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let ds = preprocess(&load_csv(path, &TargetColumn::Last, Task::Regression)?, Task::Regression)?;
    println!("diabetes: {} instances, {} features", ds.n(), ds.m());

    let cfg = TrainConfig::default();
    let mask = Masking::default();
    println!("{:<6} {:>10} {:>22} {:>12}", "model", "lambda", "estimate", "rel. error");
    for id in [Algorithm::Ridge, Algorithm::Lasso] {
        let spec = AlgorithmSpec::new(id);
        for lambda in [0.001, 0.1, 10.0] {
            let hp = Hyperparams::new(lambda);
            let params = train(&spec, &hp, &ds, None, &cfg)?;
            let report = steal(&spec, Some(&hp), &params, &ds, None, &mask)?;
            println!(
                "{:<6} {:>10} {:>22} {:>12.3e}",
                id.to_string(),
                lambda,
                report.lambda_hat.lambda,
                report.max_relative_error().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
