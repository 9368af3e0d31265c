//! Three ways to get a tuned SVM: cross-validate on all training data (M1),
//! on a sample (M2), or on a 1% sample followed by stealing λ from the
//! sample model and one final training on everything (M3). Costs are counted
//! in training rows × solver iterations.
//!
//! cargo run --release --example train_steal_retrain

use hypersteal::experiments::{compare_strategies, DEFAULT_GRID};
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let spec = AlgorithmSpec::new(Algorithm::SvmSquaredHinge);
    let cfg = TrainConfig::default();
    for seed in 0..3 {
        let ds = synth_gaussian(2000, 10, 1)?;
        let (train_ds, test_ds) = split(&ds, 0.5, seed)?;
        let reports = compare_strategies(&spec, &train_ds, &test_ds, &DEFAULT_GRID, 5, 0.01, &cfg, seed)?;
        println!("seed {seed}");
        for r in &reports {
            println!(
                "  {} fraction {:<7} acc {:.4}  rel. error vs M1 {:.4}  cost {:>7}  speedup {:>5.1}x",
                r.method,
                r.sample_fraction.map_or("1".to_string(), |f| format!("{f:.4}")),
                r.test_perf,
                r.relative_perf_error_vs_m1.unwrap_or(0.0),
                r.cost_units,
                r.speedup_vs_m1.unwrap_or(1.0)
            );
        }
    }
    Ok(())
}
