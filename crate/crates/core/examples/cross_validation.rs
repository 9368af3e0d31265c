//! Grid search over λ with 5 folds, written out as CSV.
//!
//! cargo run --example cross_validation

use hypersteal::experiments::{cross_validate, write_report, Format, DEFAULT_GRID};
use hypersteal::prelude::*;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris_binary.csv");
    let ds = preprocess(&load_csv(path, &TargetColumn::Last, Task::Classification)?, Task::Classification)?;
    let cfg = TrainConfig::default();
    let mut results = Vec::new();
    for id in [Algorithm::L2Logistic, Algorithm::L1Logistic, Algorithm::SvmHinge] {
        results.push(cross_validate(&AlgorithmSpec::new(id), &ds, &DEFAULT_GRID, 5, &cfg, 0)?);
    }
    write_report(&results, Format::Csv, std::io::stdout().lock())
}
