//! The fourteen regularized learners: their specs, parameters, objectives,
//! trainers and evaluation.

mod objective;
mod predict;
mod serial;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::kernels::DEFAULT_SIGMA;

pub use objective::{nn_hidden_activations, objective, sigmoid, subgradient};
pub use predict::{evaluate, labels, metrics, predict, Metric};
pub use serial::ModelDocument;
pub use train::{lasso_lambda_max, train};

/// Default hidden width of the two-layer networks.
pub const DEFAULT_NN_HIDDEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "RR")]
    Ridge,
    #[serde(rename = "LASSO")]
    Lasso,
    #[serde(rename = "ENet")]
    ElasticNet,
    #[serde(rename = "KRR")]
    KernelRidge,
    #[serde(rename = "L2LR")]
    L2Logistic,
    #[serde(rename = "L1LR")]
    L1Logistic,
    #[serde(rename = "L2KLR")]
    L2KernelLogistic,
    #[serde(rename = "L1KLR")]
    L1KernelLogistic,
    #[serde(rename = "SVM_RHL")]
    SvmHinge,
    #[serde(rename = "SVM_SHL")]
    SvmSquaredHinge,
    #[serde(rename = "KSVM_RHL")]
    KernelSvmHinge,
    #[serde(rename = "KSVM_SHL")]
    KernelSvmSquaredHinge,
    #[serde(rename = "NN_REG")]
    NnRegression,
    #[serde(rename = "NN_CLF")]
    NnClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Linear,
    Kernel,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    LeastSquares,
    CrossEntropy,
    Hinge,
    SquaredHinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    L2,
    ElasticNet,
}

impl Algorithm {
    pub const ALL: [Algorithm; 14] = [
        Algorithm::Ridge,
        Algorithm::Lasso,
        Algorithm::ElasticNet,
        Algorithm::KernelRidge,
        Algorithm::L2Logistic,
        Algorithm::L1Logistic,
        Algorithm::L2KernelLogistic,
        Algorithm::L1KernelLogistic,
        Algorithm::SvmHinge,
        Algorithm::SvmSquaredHinge,
        Algorithm::KernelSvmHinge,
        Algorithm::KernelSvmSquaredHinge,
        Algorithm::NnRegression,
        Algorithm::NnClassification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ridge => "RR",
            Algorithm::Lasso => "LASSO",
            Algorithm::ElasticNet => "ENet",
            Algorithm::KernelRidge => "KRR",
            Algorithm::L2Logistic => "L2LR",
            Algorithm::L1Logistic => "L1LR",
            Algorithm::L2KernelLogistic => "L2KLR",
            Algorithm::L1KernelLogistic => "L1KLR",
            Algorithm::SvmHinge => "SVM_RHL",
            Algorithm::SvmSquaredHinge => "SVM_SHL",
            Algorithm::KernelSvmHinge => "KSVM_RHL",
            Algorithm::KernelSvmSquaredHinge => "KSVM_SHL",
            Algorithm::NnRegression => "NN_REG",
            Algorithm::NnClassification => "NN_CLF",
        }
    }

    pub fn family(self) -> Family {
        use Algorithm::*;
        match self {
            KernelRidge | L2KernelLogistic | L1KernelLogistic | KernelSvmHinge | KernelSvmSquaredHinge => {
                Family::Kernel
            }
            NnRegression | NnClassification => Family::Network,
            _ => Family::Linear,
        }
    }

    pub fn is_kernel(self) -> bool {
        self.family() == Family::Kernel
    }

    pub fn task(self) -> Task {
        use Algorithm::*;
        match self {
            Ridge | Lasso | ElasticNet | KernelRidge | NnRegression => Task::Regression,
            _ => Task::Classification,
        }
    }

    pub fn loss(self) -> Loss {
        use Algorithm::*;
        match self {
            Ridge | Lasso | ElasticNet | KernelRidge | NnRegression => Loss::LeastSquares,
            L2Logistic | L1Logistic | L2KernelLogistic | L1KernelLogistic | NnClassification => Loss::CrossEntropy,
            SvmHinge | KernelSvmHinge => Loss::Hinge,
            SvmSquaredHinge | KernelSvmSquaredHinge => Loss::SquaredHinge,
        }
    }

    pub fn regularizer(self) -> Regularizer {
        use Algorithm::*;
        match self {
            Lasso | L1Logistic | L1KernelLogistic => Regularizer::L1,
            ElasticNet => Regularizer::ElasticNet,
            _ => Regularizer::L2,
        }
    }

    /// Number of hyperparameters weighting regularization terms.
    pub fn hyperparameter_count(self) -> usize {
        if self == Algorithm::ElasticNet {
            2
        } else {
            1
        }
    }

    /// RR and KRR are trained by a direct solve and land exactly on the
    /// minimum.
    pub fn has_exact_trainer(self) -> bool {
        matches!(self, Algorithm::Ridge | Algorithm::KernelRidge)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        let key = match key.as_str() {
            "RIDGE" => "RR",
            "ELASTICNET" => "ENET",
            "L1BKLR" => "L1KLR",
            other => other,
        }
        .to_string();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().replace('_', "").to_ascii_uppercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

/// An algorithm together with its structural settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub id: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn_hidden: Option<usize>,
}

impl AlgorithmSpec {
    /// Spec with default kernel bandwidth / hidden width where applicable.
    pub fn new(id: Algorithm) -> Self {
        AlgorithmSpec {
            id,
            kernel_sigma: id.is_kernel().then_some(DEFAULT_SIGMA),
            nn_hidden: (id.family() == Family::Network).then_some(DEFAULT_NN_HIDDEN),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        if self.id.is_kernel() {
            self.kernel_sigma = Some(sigma);
        }
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        if self.id.family() == Family::Network {
            self.nn_hidden = Some(hidden);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let kernel = self.id.is_kernel();
        match (kernel, self.kernel_sigma) {
            (true, Some(s)) if s > 0.0 => {}
            (true, _) => return Err(Error::invalid(format!("{} needs a positive kernel_sigma", self.id))),
            (false, Some(_)) => return Err(Error::invalid(format!("{} takes no kernel_sigma", self.id))),
            (false, None) => {}
        }
        let network = self.id.family() == Family::Network;
        match (network, self.nn_hidden) {
            (true, Some(d)) if d > 0 => {}
            (true, _) => return Err(Error::invalid(format!("{} needs nn_hidden > 0", self.id))),
            (false, Some(_)) => return Err(Error::invalid(format!("{} takes no nn_hidden", self.id))),
            (false, None) => {}
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.id.task()
    }
}

impl From<Algorithm> for AlgorithmSpec {
    fn from(id: Algorithm) -> Self {
        AlgorithmSpec::new(id)
    }
}

/// Regularization weights. For elastic net `lambda` multiplies the L1 term
/// and `lambda2` the squared L2 term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
}

impl Hyperparams {
    pub fn new(lambda: f64) -> Self {
        Hyperparams { lambda, lambda2: None }
    }

    pub fn elastic(l1: f64, l2: f64) -> Self {
        Hyperparams { lambda: l1, lambda2: Some(l2) }
    }

    pub fn validate_for(&self, id: Algorithm) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        match (id == Algorithm::ElasticNet, self.lambda2) {
            (true, Some(l2)) if l2 > 0.0 && l2.is_finite() => Ok(()),
            (true, _) => Err(Error::invalid("ENet needs lambda2 > 0")),
            (false, Some(_)) => Err(Error::invalid(format!("{id} takes a single lambda"))),
            (false, None) => Ok(()),
        }
    }

    /// Values in order (λ, then λ₂ if present).
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.lambda).chain(self.lambda2).collect()
    }
}

/// Weights of the two-layer network `x ↦ sig(W₁ᵀx + b₁)ᵀ w₂ + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnParams {
    /// `m × d`
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

impl NnParams {
    pub fn hidden(&self) -> usize {
        self.w2.len()
    }

    /// `self + t · other`
    pub(crate) fn add_scaled(&self, other: &NnParams, t: f64) -> NnParams {
        NnParams {
            w1: &self.w1 + &other.w1 * t,
            b1: &self.b1 + &other.b1 * t,
            w2: &self.w2 + &other.w2 * t,
            b2: self.b2 + other.b2 * t,
        }
    }

    pub(crate) fn amax(&self) -> f64 {
        self.w1.amax().max(self.b1.amax()).max(self.w2.amax()).max(self.b2.abs())
    }

    pub(crate) fn dot(&self, other: &NnParams) -> f64 {
        self.w1.dot(&other.w1) + self.b1.dot(&other.b1) + self.w2.dot(&other.w2) + self.b2 * other.b2
    }
}

/// The learnt parameters: exactly one block, matching the algorithm family.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamBlock {
    Primal(DVector<f64>),
    Dual(DVector<f64>),
    Network(NnParams),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: String,
    pub iterations: usize,
    /// Convergence measure at exit: sup-norm of the last parameter update
    /// (projected gradient for dual coordinate descent).
    pub final_change: f64,
    pub converged: bool,
    /// Set when the regularization is strong enough to force all-zero
    /// parameters (LASSO/ENet above λ_max, L1-KLR at λ ≥ 1/2).
    pub degenerate: bool,
    /// Training work, rows × iterations (rows² for direct solves).
    pub cost_units: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub block: ParamBlock,
    pub trained_objective: f64,
    pub solver_report: SolverReport,
}

impl ModelParams {
    pub fn from_block(block: ParamBlock) -> Self {
        ModelParams { block, trained_objective: f64::NAN, solver_report: SolverReport::default() }
    }

    pub fn primal(w: DVector<f64>) -> Self {
        Self::from_block(ParamBlock::Primal(w))
    }

    pub fn dual(alpha: DVector<f64>) -> Self {
        Self::from_block(ParamBlock::Dual(alpha))
    }

    pub fn network(nn: NnParams) -> Self {
        Self::from_block(ParamBlock::Network(nn))
    }

    pub fn primal_w(&self) -> Option<&DVector<f64>> {
        match &self.block {
            ParamBlock::Primal(w) => Some(w),
            _ => None,
        }
    }

    pub fn dual_alpha(&self) -> Option<&DVector<f64>> {
        match &self.block {
            ParamBlock::Dual(a) => Some(a),
            _ => None,
        }
    }

    pub fn nn(&self) -> Option<&NnParams> {
        match &self.block {
            ParamBlock::Network(p) => Some(p),
            _ => None,
        }
    }

    /// The vector the attack differentiates: `w`, `α`, or the output weights
    /// `w₂` of a network.
    pub fn attack_vector(&self) -> &DVector<f64> {
        match &self.block {
            ParamBlock::Primal(v) | ParamBlock::Dual(v) => v,
            ParamBlock::Network(nn) => &nn.w2,
        }
    }

    pub fn attack_vector_mut(&mut self) -> &mut DVector<f64> {
        match &mut self.block {
            ParamBlock::Primal(v) | ParamBlock::Dual(v) => v,
            ParamBlock::Network(nn) => &mut nn.w2,
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.block {
            ParamBlock::Primal(v) | ParamBlock::Dual(v) => v.iter().all(|x| x.is_finite()),
            ParamBlock::Network(nn) => nn.amax().is_finite(),
        }
    }

    /// Errors unless the parameter block matches `spec` on a dataset with
    /// `n` rows and `m` features.
    pub fn check_family(&self, spec: &AlgorithmSpec, n: usize, m: usize) -> Result<()> {
        let ok = match (&self.block, spec.id.family()) {
            (ParamBlock::Primal(w), Family::Linear) => w.len() == m,
            (ParamBlock::Dual(a), Family::Kernel) => a.len() == n,
            (ParamBlock::Network(nn), Family::Network) => nn.w1.nrows() == m && nn.w1.ncols() == nn.w2.len(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::FamilyMismatch(spec.id.name().to_string()))
        }
    }
}

/// Thresholds deciding which coordinates and instances count as
/// non-differentiable; shared by trainers, gradients and the attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Masking {
    /// `|wᵢ|` at or below this is treated as exactly zero under L1.
    pub zero_threshold: f64,
    /// Hinge terms with `|margin − 1|` at or below this are excluded.
    pub margin_tol: f64,
}

impl Default for Masking {
    fn default() -> Self {
        Masking { zero_threshold: 1e-10, margin_tol: 1e-9 }
    }
}

impl Masking {
    /// Sign with the L1 convention `sign(0) = 0`.
    pub fn sign(&self, v: f64) -> f64 {
        if v.abs() <= self.zero_threshold {
            0.0
        } else {
            v.signum()
        }
    }

    /// True when an instance with this margin is strictly inside the hinge
    /// (`margin < 1`) and not on the kink.
    pub fn hinge_active(&self, margin: f64) -> bool {
        margin < 1.0 && (margin - 1.0).abs() > self.margin_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Initial step for gradient and proximal-gradient methods.
    pub step_size: f64,
    pub seed: u64,
    pub masking: Masking,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_iters: 20_000, tol: 1e-10, step_size: 1.0, seed: 0, masking: Masking::default() }
    }
}

impl TrainConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.masking.zero_threshold >= 0.0) || !(self.masking.margin_tol >= 0.0) {
            return Err(Error::invalid("tol must be positive and thresholds non-negative"));
        }
        if self.max_iters == 0 || !(self.step_size > 0.0) {
            return Err(Error::invalid("max_iters and step_size must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("l2-lr".parse::<Algorithm>().unwrap(), Algorithm::L2Logistic);
        assert_eq!("KSVM-SHL".parse::<Algorithm>().unwrap(), Algorithm::KernelSvmSquaredHinge);
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn spec_invariants() {
        for a in Algorithm::ALL {
            AlgorithmSpec::new(a).validate().unwrap();
        }
        let bad = AlgorithmSpec { id: Algorithm::Ridge, kernel_sigma: Some(1.0), nn_hidden: None };
        assert!(bad.validate().is_err());
        let bad = AlgorithmSpec { id: Algorithm::KernelRidge, kernel_sigma: None, nn_hidden: None };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hyperparam_invariants() {
        assert!(Hyperparams::new(0.0).validate_for(Algorithm::Ridge).is_err());
        assert!(Hyperparams::new(1.0).validate_for(Algorithm::ElasticNet).is_err());
        assert!(Hyperparams::elastic(1.0, 2.0).validate_for(Algorithm::ElasticNet).is_ok());
        assert!(Hyperparams::elastic(1.0, 2.0).validate_for(Algorithm::Lasso).is_err());
    }
}
