//! Kernel learners keep a dual vector α instead of weights. The attack
//! needs the same Gram matrix the model was trained with, including any
//! diagonal jitter.
//!
//! cargo run --example steal_kernel

use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris_binary.csv");
    let ds = preprocess(&load_csv(path, &TargetColumn::Last, Task::Classification)?, Task::Classification)?;
    let sigma = 1.0;
    let k = gram_gaussian_auto(&ds, sigma)?;
    println!("gram {}x{}, jitter {:e}", k.n(), k.n(), k.jitter());

    let cfg = TrainConfig::default();
    let mask = Masking::default();
    let hp = Hyperparams::new(0.05);
    for id in [
        Algorithm::L2KernelLogistic,
        Algorithm::L1KernelLogistic,
        Algorithm::KernelSvmHinge,
        Algorithm::KernelSvmSquaredHinge,
    ] {
        let spec = AlgorithmSpec::new(id).with_sigma(sigma);
        let params = train(&spec, &hp, &ds, Some(&k), &cfg)?;
        let acc = evaluate(&spec, &params, &ds, Some(ds.x()))?;
        match steal(&spec, Some(&hp), &params, &ds, Some(&k), &mask) {
            Ok(r) => println!(
                "{id:<9} train acc {acc:.3}  estimate {:.6e}  rel. error {:.2e}  (rows used {}, masked {})",
                r.lambda_hat.lambda,
                r.max_relative_error().unwrap_or(f64::NAN),
                r.system.used_rows,
                r.system.masked_count
            ),
            Err(e) => println!("{id:<9} attack failed: {e}"),
        }
    }
    Ok(())
}
