use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::objective::{nn_hidden_activations, sigmoid};
use super::{Algorithm, AlgorithmSpec, Loss, ModelParams, ParamBlock};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::kernels::cross_kernel;

/// Model outputs on the rows of `x`: real predictions for regression,
/// probabilities for logistic models and classification networks, signed
/// scores for SVMs. Kernel models need the instances they were trained on.
pub fn predict(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    x: &DMatrix<f64>,
    train_x: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let scores = match &params.block {
        ParamBlock::Primal(w) if spec.id.family() == super::Family::Linear => {
            if w.len() != x.ncols() {
                return Err(Error::LengthMismatch { left: w.len(), right: x.ncols() });
            }
            x * w
        }
        ParamBlock::Dual(alpha) if spec.id.is_kernel() => {
            let train_x = train_x.ok_or_else(|| Error::invalid("kernel prediction needs the training instances"))?;
            if train_x.nrows() != alpha.len() || train_x.ncols() != x.ncols() {
                return Err(Error::FamilyMismatch(spec.id.name().to_string()));
            }
            let sigma = spec.kernel_sigma.ok_or_else(|| Error::invalid("kernel spec without sigma"))?;
            cross_kernel(x, train_x, sigma) * alpha
        }
        ParamBlock::Network(nn) if spec.id.family() == super::Family::Network => {
            if nn.w1.nrows() != x.ncols() {
                return Err(Error::LengthMismatch { left: nn.w1.nrows(), right: x.ncols() });
            }
            nn_hidden_activations(nn, x) * &nn.w2 + DVector::from_element(x.nrows(), nn.b2)
        }
        _ => return Err(Error::FamilyMismatch(spec.id.name().to_string())),
    };
    Ok(if spec.id.loss() == Loss::CrossEntropy { scores.map(sigmoid) } else { scores })
}

/// Map classifier outputs to {0,1}: probabilities at ½, SVM scores at 0.
/// Ties go to class 1.
pub fn labels(id: Algorithm, outputs: &DVector<f64>) -> DVector<f64> {
    let threshold = if id.loss() == Loss::CrossEntropy { 0.5 } else { 0.0 };
    outputs.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse(f64),
    Acc(f64),
}

impl Metric {
    pub fn value(self) -> f64 {
        match self {
            Metric::Mse(v) | Metric::Acc(v) => v,
        }
    }
}

/// Mean squared error for regression; fraction of equal labels for
/// classification.
pub fn metrics(predictions: &DVector<f64>, targets: &DVector<f64>, task: Task) -> Result<Metric> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    let n = targets.len() as f64;
    Ok(match task {
        Task::Regression => Metric::Mse((predictions - targets).norm_squared() / n),
        Task::Classification => {
            let hits = predictions.iter().zip(targets.iter()).filter(|(p, t)| p == t).count();
            Metric::Acc(hits as f64 / n)
        }
    })
}

/// Test MSE (regression) or ACC (classification) of a trained model.
pub fn evaluate(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    test: &Dataset,
    train_x: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let out = predict(spec, params, test.x(), train_x)?;
    let out = match spec.task() {
        Task::Regression => out,
        Task::Classification => labels(spec.id, &out),
    };
    Ok(metrics(&out, test.y(), spec.task())?.value())
}
