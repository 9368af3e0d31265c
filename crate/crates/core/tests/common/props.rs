//! Property checks shared by the proptest suite and the acceptance run.

use hypersteal::attack::{gradient_scale, AttackSystem};
use hypersteal::data::{split_indices, write_csv, read_csv, Centering};
use hypersteal::defense::{round_params, round_value};
use hypersteal::experiments::{fold_assignment, select_best};
use hypersteal::kernels::gram_from_instances;
use hypersteal::models::{Family, ModelDocument, Regularizer};
use hypersteal::prelude::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseResult;

use super::{gram_unit, random_dataset, random_params, spec};

pub fn algorithm() -> impl Strategy<Value = Algorithm> {
    proptest::sample::select(Algorithm::ALL.to_vec())
}

pub fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(n, m)| {
        proptest::collection::vec(-5.0f64..5.0, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v))
    })
}

/// `b + Aλ` from the attack system equals the model gradient on every kept
/// row, for any parameters and any λ.
pub fn masking_consistency(id: Algorithm, seed: u64, lambda: f64, zero_coord: bool) -> TestCaseResult {
    let spec = spec(id);
    let ds = random_dataset(id, 12, 3, seed);
    let k = id.is_kernel().then(|| gram_unit(&ds));
    let mut params = random_params(&spec, &ds, seed ^ 0x5eed);
    if zero_coord && id.family() == Family::Linear && id.regularizer() != Regularizer::L2 {
        params.attack_vector_mut()[0] = 0.0;
    }
    let hp = if id == Algorithm::ElasticNet { Hyperparams::elastic(lambda, lambda / 2.0) } else { Hyperparams::new(lambda) };
    let mask = Masking::default();
    let sys = match build_attack_system(&spec, &params, &ds, k.as_ref(), &mask) {
        Ok(s) => s,
        Err(Error::AllMasked) => return Ok(()),
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    };
    let g = subgradient(&spec, &hp, &params, &ds, k.as_ref(), &mask).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let r = (&sys.b + &sys.a * DVector::from_vec(hp.values())) * gradient_scale(id);
    let mut full = DVector::zeros(g.len());
    for (pos, &row) in sys.rows.iter().enumerate() {
        full[row] = r[pos];
    }
    let kernel_outside = id.is_kernel() && !matches!(id, Algorithm::KernelSvmHinge | Algorithm::KernelSvmSquaredHinge);
    let expected = if kernel_outside { k.as_ref().unwrap().mul(&full) } else { full };
    for &row in &sys.rows {
        let diff = (g[row] - expected[row]).abs();
        prop_assert!(diff <= 1e-10 * g.amax().max(1.0), "{} row {}: {:e}", id, row, diff);
    }
    for &row in &sys.rows {
        prop_assert!(sys.a.row(sys.rows.iter().position(|&r| r == row).unwrap()).iter().any(|&v| v != 0.0));
    }
    Ok(())
}

pub fn rounding_idempotent(values: Vec<f64>, decimals: u32) -> TestCaseResult {
    let params = ModelParams::primal(DVector::from_vec(values.clone()));
    let once = round_params(&params, decimals);
    prop_assert_eq!(&round_params(&once, decimals).block, &once.block);
    for v in values {
        let r = round_value(v, decimals);
        prop_assert_eq!(round_value(r, decimals), r);
        prop_assert!((r - v).abs() <= 0.5 * 10f64.powi(-(decimals as i32)) * (1.0 + 1e-9) + 1e-12 * v.abs());
        prop_assert_eq!(round_value(-v, decimals), -r);
    }
    Ok(())
}

pub fn fold_partition(n: usize, k: usize, seed: u64) -> TestCaseResult {
    let folds = fold_assignment(n, k, seed);
    prop_assert_eq!(folds.len(), n);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &f) in folds.iter().enumerate() {
        prop_assert!(f < k);
        members[f].push(row);
    }
    let mut all: Vec<usize> = members.concat();
    all.sort_unstable();
    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    for m in &members {
        prop_assert!(m.len() == n / k || m.len() == n / k + 1);
    }
    Ok(())
}

pub fn gram_symmetric_pd(x: DMatrix<f64>, sigma: f64) -> TestCaseResult {
    let jitter = 1e-6;
    let k = match gram_from_instances(&x, sigma, jitter) {
        Ok(k) => k,
        // Near-duplicate rows can defeat a small jitter; that is reported, not hidden.
        Err(Error::NotPositiveDefinite { .. }) => return Ok(()),
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    };
    let v = k.values();
    for i in 0..x.nrows() {
        prop_assert!((v[(i, i)] - 1.0 - jitter).abs() <= 1e-12);
        for j in 0..x.nrows() {
            prop_assert!((v[(i, j)] - v[(j, i)]).abs() <= 1e-12);
            prop_assert!(v[(i, j)] >= 0.0 && v[(i, j)] <= 1.0 + jitter);
        }
    }
    prop_assert!(v.clone().cholesky().is_some());
    Ok(())
}

/// `−2σ² ln K` recovers squared distances, which scale by `c²`.
pub fn gram_scaling(x: DMatrix<f64>, c: f64) -> TestCaseResult {
    let sigma = 50.0;
    let dist = |m: &DMatrix<f64>| {
        let k = hypersteal::kernels::cross_kernel(m, m, sigma);
        k.map(|v| -2.0 * sigma * sigma * v.ln())
    };
    let base = dist(&x);
    let scaled = dist(&(&x * c));
    for i in 0..x.nrows() {
        for j in 0..x.nrows() {
            let direct = (x.row(i) - x.row(j)).norm_squared();
            prop_assert!((base[(i, j)] - direct).abs() <= 1e-9 * direct.max(1.0));
            prop_assert!((scaled[(i, j)] - c * c * direct).abs() <= 1e-9 * (c * c * direct).max(1.0));
        }
    }
    Ok(())
}

pub fn model_document_round_trip(id: Algorithm, seed: u64, lambda: f64) -> TestCaseResult {
    let spec = spec(id);
    let ds = random_dataset(id, 6, 3, seed);
    let params = random_params(&spec, &ds, seed);
    let hp = if id == Algorithm::ElasticNet { Hyperparams::elastic(lambda, 2.0 * lambda) } else { Hyperparams::new(lambda) };
    let doc = ModelDocument::new(spec, hp, &params);
    let json = doc.to_json().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = ModelDocument::from_json(&json).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back.algorithm, spec);
    prop_assert_eq!(back.hyperparams, hp);
    prop_assert_eq!(back.params().unwrap().block, params.block);
    Ok(())
}

pub fn dataset_csv_round_trip(x: DMatrix<f64>) -> TestCaseResult {
    let y = DVector::from_fn(x.nrows(), |i, _| (i as f64).sin());
    let ds = Dataset::new(x, y).unwrap();
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = read_csv(buf.as_slice(), &TargetColumn::Last, Task::Regression)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((back.x() - ds.x()).amax() <= 1e-12);
    prop_assert!((back.y() - ds.y()).amax() <= 1e-12);
    Ok(())
}

pub fn centering_idempotent(x: DMatrix<f64>) -> TestCaseResult {
    let y = DVector::from_fn(x.nrows(), |i, _| i as f64);
    let ds = preprocess(&Dataset::new(x, y).unwrap(), Task::Regression).unwrap();
    let again = Centering::fit(&ds).apply(&ds);
    prop_assert!((again.x() - ds.x()).amax() <= 1e-12);
    prop_assert!((again.y() - ds.y()).amax() <= 1e-12);
    Ok(())
}

pub fn split_partition(n: usize, fraction: f64, seed: u64) -> TestCaseResult {
    match split_indices(n, fraction, seed) {
        Ok((a, b)) => {
            prop_assert!(!a.is_empty() && !b.is_empty());
            let mut all: Vec<usize> = a.into_iter().chain(b).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        Err(Error::EmptySplit { .. }) => {
            let first = ((n as f64) * fraction).round() as usize;
            prop_assert!(first == 0 || first >= n);
        }
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    }
    Ok(())
}

pub fn estimator_equivariance(a: Vec<f64>, b: Vec<f64>, c: f64) -> TestCaseResult {
    let p = a.len().min(b.len());
    let a = DVector::from_vec(a[..p].to_vec());
    let b = DVector::from_vec(b[..p].to_vec());
    let build = |s: f64| {
        AttackSystem::from_parts(Algorithm::Ridge, DMatrix::from_column_slice(p, 1, (&a * s).as_slice()), &b * s)
    };
    let (Ok(base), Ok(scaled)) = (build(1.0), build(c)) else { return Ok(()) };
    let l0 = estimate_lambda(&base).unwrap().lambda;
    let l1 = estimate_lambda(&scaled).unwrap().lambda;
    prop_assert!((l0 - l1).abs() <= 1e-12 * l0.abs().max(1.0), "{} vs {}", l0, l1);
    Ok(())
}

pub fn exact_ratios(a: Vec<f64>, lambda: f64) -> TestCaseResult {
    let a = DVector::from_vec(a);
    let b = -&a * lambda;
    let Ok(sys) = AttackSystem::from_parts(Algorithm::Ridge, DMatrix::from_column_slice(a.len(), 1, a.as_slice()), b)
    else {
        return Ok(());
    };
    let est = estimate_lambda(&sys).unwrap().lambda;
    for i in 0..sys.used_rows() {
        prop_assert!((-sys.b[i] / sys.a[(i, 0)] - est).abs() <= 1e-10 * est.abs().max(1.0));
    }
    Ok(())
}

pub fn tie_rule(grid: Vec<f64>, score: f64) -> TestCaseResult {
    let scores = vec![score; grid.len()];
    let smallest = grid.iter().copied().fold(f64::INFINITY, f64::min);
    for task in [Task::Regression, Task::Classification] {
        let best = select_best(&grid, &scores, task).unwrap();
        prop_assert_eq!(grid[best], smallest);
    }
    Ok(())
}
