use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AlgorithmSpec, Hyperparams, ModelParams, NnParams, ParamBlock, SolverReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NnDoc {
    /// Row-major, `m` rows of `hidden` entries.
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

/// On-disk form of a trained model. Floats are written with the shortest
/// representation that parses back to the same bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub algorithm: AlgorithmSpec,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nn: Option<NnDoc>,
    /// Omitted for parameters that did not come from a trainer.
    #[serde(default = "nan", skip_serializing_if = "is_nan")]
    pub trained_objective: f64,
    #[serde(default)]
    pub solver_report: SolverReport,
}

fn nan() -> f64 {
    f64::NAN
}

fn is_nan(v: &f64) -> bool {
    v.is_nan()
}

impl ModelDocument {
    pub fn new(spec: AlgorithmSpec, hp: Hyperparams, params: &ModelParams) -> Self {
        let (mut w, mut alpha, mut nn) = (None, None, None);
        match &params.block {
            ParamBlock::Primal(v) => w = Some(v.as_slice().to_vec()),
            ParamBlock::Dual(v) => alpha = Some(v.as_slice().to_vec()),
            ParamBlock::Network(p) => {
                nn = Some(NnDoc {
                    w1: p.w1.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    b1: p.b1.as_slice().to_vec(),
                    w2: p.w2.as_slice().to_vec(),
                    b2: p.b2,
                })
            }
        }
        ModelDocument {
            algorithm: spec,
            hyperparams: hp,
            w,
            alpha,
            nn,
            trained_objective: params.trained_objective,
            solver_report: params.solver_report.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let block = match (&self.w, &self.alpha, &self.nn) {
            (Some(w), None, None) => ParamBlock::Primal(DVector::from_vec(w.clone())),
            (None, Some(a), None) => ParamBlock::Dual(DVector::from_vec(a.clone())),
            (None, None, Some(doc)) => {
                let hidden = doc.w2.len();
                if doc.b1.len() != hidden || doc.w1.iter().any(|r| r.len() != hidden) {
                    return Err(Error::invalid("network weights have inconsistent shapes"));
                }
                let flat: Vec<f64> = doc.w1.iter().flatten().copied().collect();
                ParamBlock::Network(NnParams {
                    w1: DMatrix::from_row_slice(doc.w1.len(), hidden, &flat),
                    b1: DVector::from_vec(doc.b1.clone()),
                    w2: DVector::from_vec(doc.w2.clone()),
                    b2: doc.b2,
                })
            }
            _ => return Err(Error::invalid("model document must hold exactly one of w, alpha, nn")),
        };
        Ok(ModelParams {
            block,
            trained_objective: self.trained_objective,
            solver_report: self.solver_report.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.algorithm.validate()?;
        doc.hyperparams.validate_for(doc.algorithm.id)?;
        Ok(doc)
    }
}
