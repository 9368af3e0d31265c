//! Recovering regularization hyperparameters from trained models.
//!
//! Given a training set and the parameters a learner produced, the gradient
//! of the training objective vanishes at the optimum. For every supported
//! learner that gradient is affine in the regularization weight, `b + λa`,
//! so λ can be read back by least squares. The crate also provides the
//! rounding countermeasure, sensitivity analysis of the estimate, and
//! cross-validation experiments that use the attack to save training cost.
//!
//! ```
//! use hypersteal::prelude::*;
//!
//! let ds = synth_regression(50, 4, 0.1, 7).unwrap();
//! let spec = AlgorithmSpec::new(Algorithm::Ridge);
//! let params = train(&spec, &Hyperparams::new(0.3), &ds, None, &TrainConfig::default()).unwrap();
//! let report = steal(&spec, Some(&Hyperparams::new(0.3)), &params, &ds, None, &Masking::default()).unwrap();
//! assert!((report.lambda_hat.lambda - 0.3).abs() < 1e-10);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod models;
pub mod report;

pub use error::{Error, Result};

/// The names most programs need.
pub mod prelude {
    pub use crate::attack::{build_attack_system, estimate_lambda, steal, steal_model_parameters, OracleKind};
    pub use crate::data::{
        load_csv, preprocess, sample, split, synth_gaussian, synth_logistic, synth_regression, Dataset, TargetColumn,
        Task,
    };
    pub use crate::kernels::{gram_gaussian, gram_gaussian_auto, GramMatrix};
    pub use crate::models::{
        evaluate, objective, predict, subgradient, train, Algorithm, AlgorithmSpec, Hyperparams, Masking,
        ModelParams, TrainConfig,
    };
    pub use crate::{Error, Result};
}
