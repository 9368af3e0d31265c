//! Hyperparameter recovery from trained parameters, and equation-solving
//! recovery of the parameters themselves from a prediction oracle.
//!
//! At a minimizer the objective's gradient vanishes. For each learner the
//! gradient with respect to the attacked block can be written as a fixed
//! multiple of `b + A λ`, where `A` and `b` depend only on the data and the
//! learnt parameters. Setting it to zero gives an overdetermined linear
//! system in λ that is solved in the least-squares sense.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::models::{
    nn_hidden_activations, sigmoid, Algorithm, AlgorithmSpec, Hyperparams, Loss, Masking, ModelParams,
};

/// Largest accepted condition number of the 2×2 normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// The linear system `b + A λ ≈ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSystem {
    pub algorithm: Algorithm,
    /// `p × h`, one column per hyperparameter.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Index (coordinate of `w`/`α`/`w₂`) each kept row came from.
    pub rows: Vec<usize>,
    /// Rows dropped by sign-0 masking or because their `A` row was zero.
    pub masked_count: usize,
    /// Set when every hinge term was inactive, leaving `b = 0`.
    pub zero_b: bool,
}

impl AttackSystem {
    pub fn used_rows(&self) -> usize {
        self.b.len()
    }

    pub fn hyperparameter_count(&self) -> usize {
        self.a.ncols()
    }

    /// Build directly from the columns of `A` and `b`. Zero rows of `A` are
    /// dropped.
    pub fn from_parts(algorithm: Algorithm, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::LengthMismatch { left: a.nrows(), right: b.len() });
        }
        let keep: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).iter().any(|&v| v != 0.0)).collect();
        let masked = a.nrows() - keep.len();
        let zero_b = b.iter().all(|&v| v == 0.0);
        finish(algorithm, a.select_rows(&keep), b.select_rows(&keep), keep, masked, zero_b)
    }
}

fn finish(
    algorithm: Algorithm,
    a: DMatrix<f64>,
    b: DVector<f64>,
    rows: Vec<usize>,
    masked_count: usize,
    zero_b: bool,
) -> Result<AttackSystem> {
    if b.is_empty() {
        return Err(Error::AllMasked);
    }
    if b.len() < a.ncols() {
        return Err(Error::invalid(format!("{} equations for {} unknowns", b.len(), a.ncols())));
    }
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("attack system has non-finite entries"));
    }
    Ok(AttackSystem { algorithm, a, b, rows, masked_count, zero_b })
}

/// Factor relating the model gradient to `b + Aλ`: the gradient equals
/// `scale · (b + Aλ)` for linear models and networks, and
/// `scale · K (b + Aλ)` for kernel models other than the SVMs (whose `A`
/// already carries the `K`).
pub fn gradient_scale(id: Algorithm) -> f64 {
    match id {
        Algorithm::Ridge | Algorithm::KernelRidge | Algorithm::SvmSquaredHinge | Algorithm::KernelSvmSquaredHinge => {
            2.0
        }
        _ => 1.0,
    }
}

/// Sum over hinge-active instances of `weight(margin) · yᵢ · row_i(M)`,
/// negated; `M` is `X` or `K`.
fn hinge_sum(
    loss: Loss,
    rows_of: &DMatrix<f64>,
    y: &DVector<f64>,
    scores: &DVector<f64>,
    mask: &Masking,
) -> (DVector<f64>, bool) {
    let mut b = DVector::zeros(rows_of.ncols());
    let mut any = false;
    for i in 0..rows_of.nrows() {
        let yy = 2.0 * y[i] - 1.0;
        let margin = yy * scores[i];
        if !mask.hinge_active(margin) {
            continue;
        }
        any = true;
        let weight = if loss == Loss::Hinge { 1.0 } else { 1.0 - margin };
        for j in 0..rows_of.ncols() {
            b[j] -= yy * weight * rows_of[(i, j)];
        }
    }
    (b, any)
}

/// Keep coordinates whose L1 sign is nonzero.
fn sign_masked(
    algorithm: Algorithm,
    signs_of: &DVector<f64>,
    extra_col: Option<&DVector<f64>>,
    b: &DVector<f64>,
    mask: &Masking,
) -> Result<AttackSystem> {
    let rows: Vec<usize> = (0..signs_of.len()).filter(|&i| mask.sign(signs_of[i]) != 0.0).collect();
    let masked = signs_of.len() - rows.len();
    let h = if extra_col.is_some() { 2 } else { 1 };
    let a = DMatrix::from_fn(rows.len(), h, |r, c| {
        let i = rows[r];
        if c == 0 {
            mask.sign(signs_of[i])
        } else {
            2.0 * extra_col.expect("second column")[i]
        }
    });
    let b = b.select_rows(&rows);
    finish(algorithm, a, b, rows, masked, false)
}

/// Assemble `(A, b)` for `params` trained with `spec` on `ds`.
pub fn build_attack_system(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<AttackSystem> {
    params.check_family(spec, ds.n(), ds.m())?;
    let id = spec.id;
    let x = ds.x();
    let y = ds.y();
    let kernel = || -> Result<&GramMatrix> {
        let k = k.ok_or_else(|| Error::invalid(format!("{id} needs a gram matrix")))?;
        if k.n() != ds.n() {
            return Err(Error::LengthMismatch { left: ds.n(), right: k.n() });
        }
        Ok(k)
    };
    let column = |v: DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());

    match id {
        Algorithm::Ridge => {
            let w = params.primal_w().expect("checked");
            AttackSystem::from_parts(id, column(w.clone()), x.tr_mul(&(x * w - y)))
        }
        Algorithm::Lasso | Algorithm::ElasticNet => {
            let w = params.primal_w().expect("checked");
            let b = x.tr_mul(&(x * w - y)) * 2.0;
            let second = (id == Algorithm::ElasticNet).then_some(w);
            sign_masked(id, w, second, &b, mask)
        }
        Algorithm::L2Logistic | Algorithm::L1Logistic => {
            let w = params.primal_w().expect("checked");
            let b = x.tr_mul(&((x * w).map(sigmoid) - y));
            if id == Algorithm::L1Logistic {
                sign_masked(id, w, None, &b, mask)
            } else {
                AttackSystem::from_parts(id, column(w * 2.0), b)
            }
        }
        Algorithm::SvmHinge | Algorithm::SvmSquaredHinge => {
            let w = params.primal_w().expect("checked");
            let (b, any) = hinge_sum(id.loss(), x, y, &(x * w), mask);
            let a = if id == Algorithm::SvmHinge { w * 2.0 } else { w.clone() };
            let mut sys = AttackSystem::from_parts(id, column(a), b)?;
            sys.zero_b |= !any;
            Ok(sys)
        }
        Algorithm::KernelRidge => {
            let k = kernel()?;
            let alpha = params.dual_alpha().expect("checked");
            AttackSystem::from_parts(id, column(alpha.clone()), k.mul(alpha) - y)
        }
        Algorithm::L2KernelLogistic | Algorithm::L1KernelLogistic => {
            let k = kernel()?;
            let alpha = params.dual_alpha().expect("checked");
            let beta = k.mul(alpha);
            let b = beta.map(sigmoid) - y;
            if id == Algorithm::L1KernelLogistic {
                sign_masked(id, &beta, None, &b, mask)
            } else {
                AttackSystem::from_parts(id, column(alpha * 2.0), b)
            }
        }
        Algorithm::KernelSvmHinge | Algorithm::KernelSvmSquaredHinge => {
            let k = kernel()?;
            let alpha = params.dual_alpha().expect("checked");
            let beta = k.mul(alpha);
            let (b, any) = hinge_sum(id.loss(), k.values(), y, &beta, mask);
            let a = if id == Algorithm::KernelSvmHinge { &beta * 2.0 } else { beta };
            let mut sys = AttackSystem::from_parts(id, column(a), b)?;
            sys.zero_b |= !any;
            Ok(sys)
        }
        Algorithm::NnRegression | Algorithm::NnClassification => {
            let nn = params.nn().expect("checked");
            let h = nn_hidden_activations(nn, x);
            let s = &h * &nn.w2 + DVector::from_element(ds.n(), nn.b2);
            let (b, a) = if id == Algorithm::NnClassification {
                (-h.tr_mul(&(y - s.map(sigmoid))), nn.w2.clone())
            } else {
                (h.tr_mul(&(y - s)) * -2.0, &nn.w2 * 2.0)
            };
            AttackSystem::from_parts(id, column(a), b)
        }
    }
}

/// Least-squares solution together with the condition number of `AᵀA`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub hyperparams: Hyperparams,
    pub condition: f64,
}

/// `λ̂ = −(AᵀA)⁻¹Aᵀb`, the minimizer of `‖b + Aλ‖₂`.
pub fn estimate_lambda(sys: &AttackSystem) -> Result<Hyperparams> {
    solve_normal_equations(sys).map(|e| e.hyperparams)
}

pub fn solve_normal_equations(sys: &AttackSystem) -> Result<Estimate> {
    let a = &sys.a;
    let atb = a.tr_mul(&sys.b);
    match a.ncols() {
        1 => {
            let ata = a.column(0).norm_squared();
            if !(ata > 0.0) {
                return Err(Error::SingularNormalEquations(f64::INFINITY));
            }
            Ok(Estimate { hyperparams: Hyperparams::new(-atb[0] / ata), condition: 1.0 })
        }
        2 => {
            let n = a.tr_mul(a);
            let (p, q, r) = (n[(0, 0)], n[(0, 1)], n[(1, 1)]);
            let det = p * r - q * q;
            // eigenvalues of the symmetric 2×2 matrix
            let mean = 0.5 * (p + r);
            let radius = (0.25 * (p - r).powi(2) + q * q).sqrt();
            let (hi, lo) = (mean + radius, mean - radius);
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if !(condition <= MAX_CONDITION) || !(det > 0.0) {
                return Err(Error::SingularNormalEquations(condition));
            }
            let l1 = -(r * atb[0] - q * atb[1]) / det;
            let l2 = -(p * atb[1] - q * atb[0]) / det;
            Ok(Estimate { hyperparams: Hyperparams::elastic(l1, l2), condition })
        }
        h => Err(Error::invalid(format!("{h} hyperparameters are not supported"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub used_rows: usize,
    pub masked_count: usize,
    pub zero_b: bool,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealReport {
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_true: Option<Hyperparams>,
    pub lambda_hat: Hyperparams,
    /// `|λ̂ − λ| / λ` for each hyperparameter, when the truth is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<Vec<f64>>,
    pub system: SystemSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StealReport {
    /// Largest relative error over the hyperparameters.
    pub fn max_relative_error(&self) -> Option<f64> {
        self.relative_error.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max))
    }
}

impl crate::report::Tabular for StealReport {
    fn csv_header() -> Vec<&'static str> {
        vec![
            "algorithm",
            "lambda_true",
            "lambda2_true",
            "lambda_hat",
            "lambda2_hat",
            "relative_error",
            "relative_error2",
            "used_rows",
            "masked_count",
            "warnings",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        use crate::report::{cell, opt_cell};
        let err = |i: usize| opt_cell(self.relative_error.as_ref().and_then(|v| v.get(i).copied()));
        vec![vec![
            self.algorithm.to_string(),
            opt_cell(self.lambda_true.map(|h| h.lambda)),
            opt_cell(self.lambda_true.and_then(|h| h.lambda2)),
            cell(self.lambda_hat.lambda),
            opt_cell(self.lambda_hat.lambda2),
            err(0),
            err(1),
            self.system.used_rows.to_string(),
            self.system.masked_count.to_string(),
            self.warnings.join("; "),
        ]]
    }
}

pub fn relative_errors(truth: &Hyperparams, estimate: &Hyperparams) -> Vec<f64> {
    truth.values().iter().zip(estimate.values()).map(|(t, e)| (e - t).abs() / t).collect()
}

/// Build the attack system for `params` and solve it.
pub fn steal(
    spec: &AlgorithmSpec,
    hp_true: Option<&Hyperparams>,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<StealReport> {
    let sys = build_attack_system(spec, params, ds, k, mask)?;
    let est = solve_normal_equations(&sys)?;
    let mut warnings = Vec::new();
    if sys.zero_b {
        warnings.push("no hinge term is active; b is zero and the estimate is meaningless".to_string());
    }
    if est.hyperparams.values().iter().any(|&v| v <= 0.0) {
        warnings.push("non-positive estimate".to_string());
    }
    if !params.solver_report.solver.is_empty() && !params.solver_report.converged {
        warnings.push("parameters come from a solver that did not converge".to_string());
    }
    Ok(StealReport {
        algorithm: spec.id,
        lambda_true: hp_true.copied(),
        lambda_hat: est.hyperparams,
        relative_error: hp_true.map(|t| relative_errors(t, &est.hyperparams)),
        system: SystemSummary {
            used_rows: sys.used_rows(),
            masked_count: sys.masked_count,
            zero_b: sys.zero_b,
            condition: est.condition,
        },
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleKind {
    /// Returns `wᵀx`.
    LinearRegression,
    /// Returns `1/(1 + e^{−wᵀx})`.
    LogisticWithConfidence,
}

/// Recover `w` from `query_budget` seeded queries drawn uniformly from
/// `[−1, 1]^m`.
pub fn steal_model_parameters(
    oracle: impl FnMut(&DVector<f64>) -> f64,
    kind: OracleKind,
    m: usize,
    query_budget: usize,
    seed: u64,
) -> Result<DVector<f64>> {
    if m == 0 || query_budget < m {
        return Err(Error::invalid(format!("need at least m = {m} queries, got {query_budget}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = DMatrix::from_fn(query_budget, m, |_, _| rng.random_range(-1.0..1.0));
    steal_model_parameters_with_queries(oracle, kind, &queries)
}

/// Recover `w` from the given query points (one per row).
pub fn steal_model_parameters_with_queries(
    mut oracle: impl FnMut(&DVector<f64>) -> f64,
    kind: OracleKind,
    queries: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (p, m) = queries.shape();
    let mut rhs = DVector::zeros(p);
    for i in 0..p {
        let q = queries.row(i).transpose();
        let out = oracle(&q);
        rhs[i] = match kind {
            OracleKind::LinearRegression => out,
            OracleKind::LogisticWithConfidence => {
                if !(out > 0.0 && out < 1.0) {
                    return Err(Error::ConfidenceOutOfRange(out));
                }
                (out / (1.0 - out)).ln()
            }
        };
    }
    let svd = queries.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank < m {
        return Err(Error::DegenerateQueries { rank, needed: m });
    }
    svd.solve(&rhs, eps).map_err(Error::invalid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys1(a: &[f64], b: &[f64]) -> AttackSystem {
        AttackSystem::from_parts(
            Algorithm::Ridge,
            DMatrix::from_column_slice(a.len(), 1, a),
            DVector::from_row_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn exact_and_overdetermined_estimates() {
        assert_eq!(estimate_lambda(&sys1(&[1.0, 2.0], &[-2.0, -4.0])).unwrap().lambda, 2.0);
        assert_eq!(estimate_lambda(&sys1(&[1.0, 1.0], &[-1.0, -3.0])).unwrap().lambda, 2.0);
    }

    #[test]
    fn ridge_toy_system() {
        let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let p = ModelParams::primal(DVector::from_vec(vec![0.5, 0.5]));
        let sys = build_attack_system(&Algorithm::Ridge.into(), &p, &ds, None, &Masking::default()).unwrap();
        assert_eq!(sys.a.as_slice(), &[0.5, 0.5]);
        assert_eq!(sys.b.as_slice(), &[-0.5, -0.5]);
    }

    #[test]
    fn lasso_zero_coordinate_masked() {
        let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let p = ModelParams::primal(DVector::from_vec(vec![0.0, 0.3]));
        let sys = build_attack_system(&Algorithm::Lasso.into(), &p, &ds, None, &Masking::default()).unwrap();
        assert_eq!((sys.used_rows(), sys.masked_count), (1, 1));
        assert_eq!(sys.rows, vec![1]);
        let p = ModelParams::primal(DVector::zeros(2));
        let err = build_attack_system(&Algorithm::Lasso.into(), &p, &ds, None, &Masking::default());
        assert!(matches!(err, Err(Error::AllMasked)));
    }

    #[test]
    fn collinear_elastic_net_is_singular() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, -1.0, -2.0]);
        let sys = AttackSystem::from_parts(Algorithm::ElasticNet, a, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(estimate_lambda(&sys), Err(Error::SingularNormalEquations(_))));
    }

    #[test]
    fn elastic_net_exact_pair() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.4, -1.0, 2.0, 1.0, -0.6]);
        let truth = DVector::from_vec(vec![0.7, 1.9]);
        let b = -(&a * &truth);
        let sys = AttackSystem::from_parts(Algorithm::ElasticNet, a, b).unwrap();
        let est = estimate_lambda(&sys).unwrap();
        assert!((est.lambda - 0.7).abs() < 1e-14 && (est.lambda2.unwrap() - 1.9).abs() < 1e-14);
    }

    #[test]
    fn linear_oracle_two_queries() {
        let w = DVector::from_vec(vec![2.0, -1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        let got =
            steal_model_parameters_with_queries(|x| w.dot(x), OracleKind::LinearRegression, &q).unwrap();
        assert!((got - &w).amax() < 1e-14);
    }

    #[test]
    fn logistic_oracle() {
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let got = steal_model_parameters(|x| sigmoid(w.dot(x)), OracleKind::LogisticWithConfidence, 2, 10, 4)
            .unwrap();
        assert!((got - &w).amax() <= 1e-6);
    }

    #[test]
    fn degenerate_and_out_of_range() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let err = steal_model_parameters_with_queries(|x| x[0], OracleKind::LinearRegression, &q);
        assert!(matches!(err, Err(Error::DegenerateQueries { rank: 1, needed: 2 })));
        let err = steal_model_parameters(|_| 1.0, OracleKind::LogisticWithConfidence, 2, 4, 0);
        assert!(matches!(err, Err(Error::ConfidenceOutOfRange(_))));
    }
}
