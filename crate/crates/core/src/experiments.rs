//! Cross-validation and the three ways of obtaining a tuned model: tune on
//! everything (M1), tune on a sample (M2), or tune on a sample, steal the
//! weight from the sample model and retrain on everything (M3).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::steal;
use crate::data::{permutation, preprocess_pair, sample, Dataset, Task};
use crate::defense::gram_for;
use crate::error::{Error, Result};
use crate::models::{evaluate, train, Algorithm, AlgorithmSpec, Hyperparams, TrainConfig};
use crate::report::{cell, opt_cell, Tabular};

pub use crate::report::{emit_report, write_report, Format};

/// `10⁻³, 10⁻², …, 10³`
pub const DEFAULT_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_FOLDS: usize = 5;

/// Fold index of every row: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut folds = vec![0; n];
    for (pos, row) in permutation(n, seed).into_iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

/// Hyperparameters tried for grid value `lambda`. Elastic net uses the same
/// value for both weights.
pub fn grid_hyperparams(id: Algorithm, lambda: f64) -> Hyperparams {
    if id == Algorithm::ElasticNet {
        Hyperparams::elastic(lambda, lambda)
    } else {
        Hyperparams::new(lambda)
    }
}

/// Index of the best score: lowest MSE or highest ACC, ties resolved toward
/// the smaller grid value.
pub fn select_best(grid: &[f64], scores: &[f64], task: Task) -> Option<usize> {
    let better = |a: f64, b: f64| match task {
        Task::Regression => a < b,
        Task::Classification => a > b,
    };
    let mut best: Option<usize> = None;
    for i in 0..grid.len().min(scores.len()) {
        best = match best {
            None => Some(i),
            Some(j) if better(scores[i], scores[j]) => Some(i),
            Some(j) if scores[i] == scores[j] && grid[i] < grid[j] => Some(i),
            keep => keep,
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub algorithm: Algorithm,
    pub grid: Vec<f64>,
    /// Mean validation MSE or ACC per grid value.
    pub mean_scores: Vec<f64>,
    pub best_lambda: f64,
    pub folds: usize,
    pub trainings: usize,
    /// Trainings that failed and were scored as worst.
    pub failures: usize,
    pub cost_units: u64,
}

impl CvResult {
    pub fn best_hyperparams(&self) -> Hyperparams {
        grid_hyperparams(self.algorithm, self.best_lambda)
    }
}

impl Tabular for CvResult {
    fn csv_header() -> Vec<&'static str> {
        vec!["algorithm", "lambda", "mean_score", "best", "folds", "cost_units"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.grid
            .iter()
            .zip(&self.mean_scores)
            .map(|(&l, &s)| {
                vec![
                    self.algorithm.to_string(),
                    cell(l),
                    cell(s),
                    (l == self.best_lambda).to_string(),
                    self.folds.to_string(),
                    self.cost_units.to_string(),
                ]
            })
            .collect()
    }
}

/// k-fold grid search. The dataset is used as given; preprocess it first.
pub fn cross_validate(
    spec: &AlgorithmSpec,
    ds: &Dataset,
    grid: &[f64],
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CvResult> {
    if k < 2 || ds.n() < k {
        return Err(Error::invalid(format!("need 2 <= k <= n (k = {k}, n = {})", ds.n())));
    }
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("grid must be non-empty with positive values"));
    }
    let task = spec.task();
    let worst = match task {
        Task::Regression => f64::INFINITY,
        Task::Classification => f64::NEG_INFINITY,
    };
    let assignment = fold_assignment(ds.n(), k, seed);
    let mut parts = Vec::with_capacity(k);
    for f in 0..k {
        let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = (0..ds.n()).partition(|&i| assignment[i] != f);
        let train_ds = ds.select_rows(&train_rows);
        let gram = gram_for(spec, &train_ds)?;
        parts.push((train_ds, ds.select_rows(&test_rows), gram));
    }

    let mut mean_scores = Vec::with_capacity(grid.len());
    let (mut trainings, mut failures, mut cost_units) = (0, 0, 0u64);
    for &lambda in grid {
        let hp = grid_hyperparams(spec.id, lambda);
        let mut total = 0.0;
        for (train_ds, test_ds, gram) in &parts {
            trainings += 1;
            let score = train(spec, &hp, train_ds, gram.as_ref(), cfg).and_then(|p| {
                cost_units += p.solver_report.cost_units;
                evaluate(spec, &p, test_ds, Some(train_ds.x()))
            });
            total += match score {
                Ok(s) if s.is_finite() => s,
                _ => {
                    failures += 1;
                    worst
                }
            };
        }
        mean_scores.push(total / k as f64);
    }
    let best = select_best(grid, &mean_scores, task).expect("grid is non-empty");
    Ok(CvResult {
        algorithm: spec.id,
        grid: grid.to_vec(),
        mean_scores,
        best_lambda: grid[best],
        folds: k,
        trainings,
        failures,
        cost_units,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    M1,
    M2,
    M3,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Method::M1),
            "M2" => Ok(Method::M2),
            "M3" => Ok(Method::M3),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub method: Method,
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_fraction: Option<f64>,
    /// λ chosen by cross-validation (on the sample for M2 and M3).
    pub cv_lambda: f64,
    /// λ̂ recovered from the sample model (M3 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stolen_lambda: Option<Hyperparams>,
    pub test_perf: f64,
    pub cost_units: u64,
    pub cv_cost_units: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_perf_error_vs_m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup_vs_m1: Option<f64>,
}

impl StrategyReport {
    /// Fill in the comparison fields against an M1 run.
    pub fn compare_to(&mut self, m1: &StrategyReport) {
        self.relative_perf_error_vs_m1 = Some(if m1.test_perf == 0.0 {
            (self.test_perf - m1.test_perf).abs()
        } else {
            (self.test_perf - m1.test_perf).abs() / m1.test_perf.abs()
        });
        self.speedup_vs_m1 = Some(m1.cost_units as f64 / self.cost_units as f64);
    }
}

impl Tabular for StrategyReport {
    fn csv_header() -> Vec<&'static str> {
        vec![
            "method",
            "algorithm",
            "sample_fraction",
            "cv_lambda",
            "stolen_lambda",
            "test_perf",
            "cost_units",
            "cv_cost_units",
            "relative_perf_error_vs_m1",
            "speedup_vs_m1",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.method.to_string(),
            self.algorithm.to_string(),
            opt_cell(self.sample_fraction),
            cell(self.cv_lambda),
            opt_cell(self.stolen_lambda.map(|h| h.lambda)),
            cell(self.test_perf),
            self.cost_units.to_string(),
            self.cv_cost_units.to_string(),
            opt_cell(self.relative_perf_error_vs_m1),
            opt_cell(self.speedup_vs_m1),
        ]]
    }
}

/// Run one strategy. `train_ds` and `test_ds` are raw; every training set
/// is preprocessed with its own statistics and the test set is transformed
/// with those.
#[allow(clippy::too_many_arguments)]
pub fn run_strategy(
    method: Method,
    spec: &AlgorithmSpec,
    train_ds: &Dataset,
    test_ds: &Dataset,
    grid: &[f64],
    k: usize,
    fraction: Option<f64>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StrategyReport> {
    let task = spec.task();
    let sampled = match (method, fraction) {
        (Method::M1, _) => None,
        (_, Some(f)) if f > 0.0 && f < 1.0 => Some(sample(train_ds, f, seed)?),
        _ => return Err(Error::invalid(format!("{method} needs a sample fraction in (0, 1)"))),
    };
    let tune_on = sampled.as_ref().unwrap_or(train_ds);
    let (tune, tune_test) = preprocess_pair(tune_on, test_ds, task)?;
    let cv = cross_validate(spec, &tune, grid, k, cfg, seed)?;
    let hp = cv.best_hyperparams();
    let gram = gram_for(spec, &tune)?;
    let tuned = train(spec, &hp, &tune, gram.as_ref(), cfg)?;
    let mut cost_units = cv.cost_units + tuned.solver_report.cost_units;

    let (test_perf, stolen) = match method {
        Method::M1 | Method::M2 => (evaluate(spec, &tuned, &tune_test, Some(tune.x()))?, None),
        Method::M3 => {
            let report = steal(spec, None, &tuned, &tune, gram.as_ref(), &cfg.masking)
                .map_err(|e| Error::StrategyFailed(format!("attack on the sample model failed: {e}")))?;
            cost_units += tune.n() as u64;
            let stolen = report.lambda_hat;
            if stolen.values().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::StrategyFailed(format!("stolen hyperparameter {stolen:?} is not positive")));
            }
            let (full, full_test) = preprocess_pair(train_ds, test_ds, task)?;
            let gram = gram_for(spec, &full)?;
            let model = train(spec, &stolen, &full, gram.as_ref(), cfg)?;
            cost_units += model.solver_report.cost_units;
            (evaluate(spec, &model, &full_test, Some(full.x()))?, Some(stolen))
        }
    };
    Ok(StrategyReport {
        method,
        algorithm: spec.id,
        sample_fraction: fraction.filter(|_| method != Method::M1),
        cv_lambda: cv.best_lambda,
        stolen_lambda: stolen,
        test_perf,
        cost_units,
        cv_cost_units: cv.cost_units,
        relative_perf_error_vs_m1: None,
        speedup_vs_m1: None,
    })
}

/// Run M2 at a sample fraction whose cost is close to `target_cost`: start
/// from `initial` and rescale once by the observed cost ratio.
#[allow(clippy::too_many_arguments)]
pub fn run_m2_matched(
    spec: &AlgorithmSpec,
    train_ds: &Dataset,
    test_ds: &Dataset,
    grid: &[f64],
    k: usize,
    initial: f64,
    target_cost: u64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StrategyReport> {
    let min_fraction = (k as f64 + 1.0) / train_ds.n() as f64;
    let clamp = |f: f64| f.clamp(min_fraction, 0.99);
    let first = run_strategy(Method::M2, spec, train_ds, test_ds, grid, k, Some(clamp(initial)), cfg, seed)?;
    let scaled = clamp(clamp(initial) * target_cost as f64 / first.cost_units as f64);
    run_strategy(Method::M2, spec, train_ds, test_ds, grid, k, Some(scaled), cfg, seed)
}

/// M1, M3 at fraction `q`, and M2 at a cost-matched fraction, with the
/// comparison fields filled in.
#[allow(clippy::too_many_arguments)]
pub fn compare_strategies(
    spec: &AlgorithmSpec,
    train_ds: &Dataset,
    test_ds: &Dataset,
    grid: &[f64],
    k: usize,
    q: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<StrategyReport>> {
    let m1 = run_strategy(Method::M1, spec, train_ds, test_ds, grid, k, None, cfg, seed)?;
    let mut m3 = run_strategy(Method::M3, spec, train_ds, test_ds, grid, k, Some(q), cfg, seed)?;
    let initial = m3.cost_units as f64 / m1.cost_units as f64;
    let mut m2 = run_m2_matched(spec, train_ds, test_ds, grid, k, initial, m3.cost_units, cfg, seed)?;
    m2.compare_to(&m1);
    m3.compare_to(&m1);
    let mut base = m1.clone();
    base.compare_to(&m1);
    Ok(vec![base, m2, m3])
}
