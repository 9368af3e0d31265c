//! Releasing rounded parameters: how much it hurts the attack and how much
//! it costs in test error.
//!
//! cargo run --release --example rounding_defense

use hypersteal::data::preprocess_pair;
use hypersteal::defense::defense_sweep;
use hypersteal::experiments::{cross_validate, DEFAULT_GRID};
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let raw = load_csv(path, &TargetColumn::Last, Task::Regression)?;
    let (train_raw, test_raw) = split(&raw, 0.5, 0)?;
    let (train_ds, test_ds) = preprocess_pair(&train_raw, &test_raw, Task::Regression)?;
    let cfg = TrainConfig::default();

    for id in [Algorithm::Ridge, Algorithm::Lasso, Algorithm::KernelRidge] {
        let spec = AlgorithmSpec::new(id);
        let cv = cross_validate(&spec, &train_ds, &DEFAULT_GRID, 5, &cfg, 0)?;
        let sweep = defense_sweep(&spec, &cv.best_hyperparams(), &train_ds, &test_ds, &cfg, &[1, 2, 3, 4, 5])?;
        println!("{id} at λ = {} (unrounded estimation error {:.1e})", cv.best_lambda, sweep.baseline_estimation_error);
        for p in &sweep.per_decimal {
            println!(
                "  {} decimals: estimation error {:.2e}, test MSE change {:.2e}",
                p.decimals, p.relative_estimation_error, p.relative_perf_error
            );
        }
    }
    Ok(())
}
