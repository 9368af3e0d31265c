//! Every supported learner on a small synthetic problem, attacked with the
//! weight it was trained at.
//!
//! cargo run --release --example all_algorithms

use hypersteal::kernels::gram_gaussian_auto;
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let reg = preprocess(&synth_regression(80, 5, 0.3, 1)?, Task::Regression)?;
    let clf = preprocess(&synth_logistic(80, 5, 0.3, 2)?, Task::Classification)?;
    let cfg = TrainConfig::default().with_max_iters(50_000);
    let sigma = 1.0;

    println!("{:<9} {:>10} {:>12} {:>9} {:>10}", "algorithm", "lambda", "rel. error", "solver", "converged");
    for id in Algorithm::ALL {
        let ds = if id.task() == Task::Regression { &reg } else { &clf };
        let spec = AlgorithmSpec::new(id).with_sigma(sigma);
        let k = if id.is_kernel() { Some(gram_gaussian_auto(ds, sigma)?) } else { None };
        let hp = if id == Algorithm::ElasticNet { Hyperparams::elastic(0.1, 0.2) } else { Hyperparams::new(0.1) };
        let params = train(&spec, &hp, ds, k.as_ref(), &cfg)?;
        let err = match steal(&spec, Some(&hp), &params, ds, k.as_ref(), &cfg.masking) {
            Ok(r) => format!("{:.2e}", r.max_relative_error().unwrap_or(f64::NAN)),
            Err(e) => format!("({e})"),
        };
        let rep = &params.solver_report;
        println!("{:<9} {:>10} {:>12} {:>9} {:>10}", id.to_string(), hp.lambda, err, rep.iterations, rep.converged);
    }
    Ok(())
}
