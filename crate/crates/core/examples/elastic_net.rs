//! Elastic net has two weights. Each unmasked coordinate contributes one
//! equation `bᵢ + λ₁ sign(wᵢ) + 2λ₂ wᵢ = 0`, so both are recovered jointly.
//!
//! cargo run --example elastic_net

use hypersteal::attack::{build_attack_system, solve_normal_equations};
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let ds = preprocess(&load_csv(path, &TargetColumn::Last, Task::Regression)?, Task::Regression)?;
    let spec = AlgorithmSpec::new(Algorithm::ElasticNet);
    let cfg = TrainConfig::default();

    for (l1, l2) in [(0.01, 0.5), (1.0, 1.0), (50.0, 0.01)] {
        let hp = Hyperparams::elastic(l1, l2);
        let params = train(&spec, &hp, &ds, None, &cfg)?;
        let sys = build_attack_system(&spec, &params, &ds, None, &cfg.masking)?;
        let est = solve_normal_equations(&sys)?;
        println!(
            "true ({l1}, {l2})  estimated ({:.8}, {:.8})  cond(AᵀA) {:.1e}  nonzero coefs {}",
            est.hyperparams.lambda,
            est.hyperparams.lambda2.unwrap_or(f64::NAN),
            est.condition,
            sys.used_rows()
        );
    }
    Ok(())
}
