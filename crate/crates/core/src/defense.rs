//! Rounding countermeasure and the sensitivity of the estimate to parameter
//! perturbations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attack::{build_attack_system, estimate_lambda, steal};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gram_gaussian_auto, GramMatrix};
use crate::models::{
    evaluate, sigmoid, train, Algorithm, AlgorithmSpec, Hyperparams, Masking, ModelParams, ParamBlock, TrainConfig,
};
use crate::report::{cell, Tabular};

/// Round half away from zero to `decimals` places.
pub fn round_value(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = v * scale;
    if !scaled.is_finite() {
        return v;
    }
    scaled.round() / scale
}

/// Round every released parameter. Networks only have their output weights
/// rounded, since those are what the attack reads.
pub fn round_params(params: &ModelParams, decimals: u32) -> ModelParams {
    let mut out = params.clone();
    match &mut out.block {
        ParamBlock::Primal(v) | ParamBlock::Dual(v) => v.apply(|x| *x = round_value(*x, decimals)),
        ParamBlock::Network(nn) => nn.w2.apply(|x| *x = round_value(*x, decimals)),
    }
    out
}

/// Gram matrix for kernel specs, nothing otherwise.
pub(crate) fn gram_for(spec: &AlgorithmSpec, ds: &Dataset) -> Result<Option<GramMatrix>> {
    match spec.kernel_sigma {
        Some(sigma) if spec.id.is_kernel() => gram_gaussian_auto(ds, sigma).map(Some),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingPoint {
    pub decimals: u32,
    /// `+∞` when rounding zeroed every usable coordinate.
    pub relative_estimation_error: f64,
    pub relative_perf_error: f64,
    pub test_perf: f64,
    pub all_masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingSweep {
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    /// Estimation error of the unrounded parameters.
    pub baseline_estimation_error: f64,
    /// Test MSE or ACC of the unrounded parameters.
    pub baseline_perf: f64,
    pub per_decimal: Vec<RoundingPoint>,
}

impl RoundingSweep {
    pub fn decimals(&self) -> Vec<u32> {
        self.per_decimal.iter().map(|p| p.decimals).collect()
    }

    pub fn at(&self, decimals: u32) -> Option<&RoundingPoint> {
        self.per_decimal.iter().find(|p| p.decimals == decimals)
    }
}

impl Tabular for RoundingSweep {
    fn csv_header() -> Vec<&'static str> {
        vec![
            "algorithm",
            "lambda",
            "decimals",
            "relative_estimation_error",
            "relative_perf_error",
            "test_perf",
            "all_masked",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.per_decimal
            .iter()
            .map(|p| {
                vec![
                    self.algorithm.to_string(),
                    cell(self.hyperparams.lambda),
                    p.decimals.to_string(),
                    cell(p.relative_estimation_error),
                    cell(p.relative_perf_error),
                    cell(p.test_perf),
                    p.all_masked.to_string(),
                ]
            })
            .collect()
    }
}

fn relative_change(reference: f64, value: f64) -> f64 {
    let diff = (value - reference).abs();
    if reference == 0.0 {
        diff
    } else {
        diff / reference.abs()
    }
}

fn estimation_error(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<Option<f64>> {
    match steal(spec, Some(hp), params, ds, k, mask) {
        Ok(r) => Ok(r.max_relative_error()),
        Err(Error::AllMasked) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Train once on `train`, then for each decimal count round the parameters,
/// re-run the attack and re-evaluate on `test`.
pub fn defense_sweep(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    decimals: &[u32],
) -> Result<RoundingSweep> {
    if decimals.is_empty() || decimals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("decimals must be non-empty and strictly increasing"));
    }
    let k = gram_for(spec, train_ds)?;
    let k = k.as_ref();
    let train_x = Some(train_ds.x());
    let params = train(spec, hp, train_ds, k, cfg)?;
    let mask = &cfg.masking;
    let baseline_estimation_error = estimation_error(spec, hp, &params, train_ds, k, mask)?.unwrap_or(f64::INFINITY);
    let baseline_perf = evaluate(spec, &params, test_ds, train_x)?;

    let mut per_decimal = Vec::with_capacity(decimals.len());
    for &d in decimals {
        let rounded = round_params(&params, d);
        let err = estimation_error(spec, hp, &rounded, train_ds, k, mask)?;
        let test_perf = evaluate(spec, &rounded, test_ds, train_x)?;
        per_decimal.push(RoundingPoint {
            decimals: d,
            relative_estimation_error: err.unwrap_or(f64::INFINITY),
            relative_perf_error: relative_change(baseline_perf, test_perf),
            test_perf,
            all_masked: err.is_none(),
        });
    }
    Ok(RoundingSweep { algorithm: spec.id, hyperparams: *hp, baseline_estimation_error, baseline_perf, per_decimal })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub algorithm: Algorithm,
    pub coord: usize,
    pub deltas: Vec<f64>,
    /// `λ̂ − λ` after perturbing the coordinate by each delta.
    pub signed_errors: Vec<f64>,
    pub abs_errors: Vec<f64>,
    /// `s` and `q` of the least-squares fit `|Δλ̂| ≈ sδ + qδ²`.
    pub fitted_slope: f64,
    pub fitted_quadratic: f64,
}

impl Tabular for PerturbationCurve {
    fn csv_header() -> Vec<&'static str> {
        vec!["algorithm", "coord", "delta", "signed_error", "abs_error"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.deltas.len())
            .map(|i| {
                vec![
                    self.algorithm.to_string(),
                    self.coord.to_string(),
                    cell(self.deltas[i]),
                    cell(self.signed_errors[i]),
                    cell(self.abs_errors[i]),
                ]
            })
            .collect()
    }
}

/// Least-squares fit of `y ≈ s·x + q·x²` with the columns rescaled to unit
/// size first.
pub fn fit_linear_quadratic(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least two points to fit a slope and curvature"));
    }
    let scale = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::invalid("all abscissae are zero"));
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| (x[i] / scale).powi(j as i32 + 1));
    let rhs = DVector::from_row_slice(y);
    let coef = design.svd(true, true).solve(&rhs, 1e-14).map_err(Error::invalid)?;
    Ok((coef[0] / scale, coef[1] / (scale * scale)))
}

/// Perturb one coordinate of the exact minimizer by each delta and record
/// how far the estimate moves.
pub fn perturbation_curve(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    ds: &Dataset,
    cfg: &TrainConfig,
    coord: usize,
    deltas: &[f64],
) -> Result<PerturbationCurve> {
    if !spec.id.has_exact_trainer() {
        return Err(Error::UnsupportedAlgorithm(spec.id.to_string()));
    }
    if deltas.is_empty() || deltas[0] <= 0.0 || deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("deltas must be positive and strictly increasing"));
    }
    let k = gram_for(spec, ds)?;
    let k = k.as_ref();
    let params = train(spec, hp, ds, k, cfg)?;
    if coord >= params.attack_vector().len() {
        return Err(Error::invalid(format!("coordinate {coord} out of range")));
    }
    let mut signed_errors = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let mut p = params.clone();
        p.attack_vector_mut()[coord] += d;
        let est = estimate_lambda(&build_attack_system(spec, &p, ds, k, &cfg.masking)?)?;
        signed_errors.push(est.lambda - hp.lambda);
    }
    let abs_errors: Vec<f64> = signed_errors.iter().map(|e| e.abs()).collect();
    let (fitted_slope, fitted_quadratic) = fit_linear_quadratic(deltas, &abs_errors)?;
    Ok(PerturbationCurve {
        algorithm: spec.id,
        coord,
        deltas: deltas.to_vec(),
        signed_errors,
        abs_errors,
        fitted_slope,
        fitted_quadratic,
    })
}

/// The estimate `λ̂` as a function of the attacked parameter vector.
pub fn lambda_hat_at(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<f64> {
    Ok(estimate_lambda(&build_attack_system(spec, params, ds, k, mask)?)?.lambda)
}

/// Central finite-difference gradient of `λ̂` with respect to the attacked
/// parameter vector.
pub fn lambda_hat_gradient_fd(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
    step: f64,
) -> Result<DVector<f64>> {
    let len = params.attack_vector().len();
    let mut g = DVector::zeros(len);
    for i in 0..len {
        let mut plus = params.clone();
        plus.attack_vector_mut()[i] += step;
        let mut minus = params.clone();
        minus.attack_vector_mut()[i] -= step;
        g[i] = (lambda_hat_at(spec, &plus, ds, k, mask)? - lambda_hat_at(spec, &minus, ds, k, mask)?) / (2.0 * step);
    }
    Ok(g)
}

/// `(‖w‖², ‖sign w‖²)`: the denominators of the L2 and L1 closed-form
/// gradient approximations.
pub fn approximation_denominators(w: &DVector<f64>, mask: &Masking) -> (f64, f64) {
    (w.norm_squared(), w.iter().filter(|&&v| mask.sign(v) != 0.0).count() as f64)
}

/// Closed-form approximation of `∇λ̂` at a trained parameter vector.
///
/// The L2 formulas treat the loss residual and the normalizing `‖w‖²` as
/// locally constant; the L1 formulas are exact away from sign changes.
pub fn grad_lambda_approx(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<DVector<f64>> {
    params.check_family(spec, ds.n(), ds.m())?;
    let x = ds.x();
    let y = ds.y();
    let v = params.attack_vector();
    let signs = v.map(|t| mask.sign(t));
    let nonzero = |d: f64| if d > 0.0 { Ok(d) } else { Err(Error::AllMasked) };
    let kernel = || k.ok_or_else(|| Error::invalid(format!("{} needs a gram matrix", spec.id)));
    match spec.id {
        Algorithm::Ridge => {
            let d = nonzero(v.norm_squared())?;
            Ok(x.tr_mul(&(y - x * v * 2.0)) / d)
        }
        Algorithm::Lasso => {
            let d = nonzero(signs.norm_squared())?;
            Ok(-(x.tr_mul(&(x * &signs))) * (2.0 / d))
        }
        Algorithm::L2Logistic => {
            let d = nonzero(v.norm_squared())?;
            let h = (x * v).map(sigmoid);
            Ok(x.tr_mul(&(y - h)) / (2.0 * d))
        }
        Algorithm::L1Logistic => {
            let d = nonzero(signs.norm_squared())?;
            let h = (x * v).map(sigmoid);
            let mut xs = x * &signs;
            xs.zip_apply(&h, |u, p| *u *= p * (1.0 - p));
            Ok(-x.tr_mul(&xs) / d)
        }
        Algorithm::L2KernelLogistic => {
            let d = nonzero(v.norm_squared())?;
            let h = kernel()?.mul(v).map(sigmoid);
            Ok((y - h) / (2.0 * d))
        }
        Algorithm::L1KernelLogistic => {
            let k = kernel()?;
            let beta = k.mul(v);
            let t = beta.map(|b| mask.sign(b));
            let d = nonzero(t.norm_squared())?;
            let mut dt = t;
            dt.zip_apply(&beta, |u, b| {
                let p = sigmoid(b);
                *u *= p * (1.0 - p);
            });
            Ok(-k.mul(&dt) / d)
        }
        other => Err(Error::UnsupportedAlgorithm(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityComparison {
    pub algorithm_a: Algorithm,
    pub norm_a: f64,
    pub algorithm_b: Algorithm,
    pub norm_b: f64,
}

/// Train both learners on `ds` at `hp` and report `‖∇λ̂‖₂` from the
/// closed-form approximation of each.
pub fn sensitivity_compare(
    spec_a: &AlgorithmSpec,
    spec_b: &AlgorithmSpec,
    ds: &Dataset,
    hp: &Hyperparams,
    cfg: &TrainConfig,
) -> Result<SensitivityComparison> {
    let norm = |spec: &AlgorithmSpec| -> Result<f64> {
        let k = gram_for(spec, ds)?;
        let params = train(spec, hp, ds, k.as_ref(), cfg)?;
        Ok(grad_lambda_approx(spec, &params, ds, k.as_ref(), &cfg.masking)?.norm())
    };
    Ok(SensitivityComparison {
        algorithm_a: spec_a.id,
        norm_a: norm(spec_a)?,
        algorithm_b: spec_b.id,
        norm_b: norm(spec_b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_examples() {
        assert_eq!(round_value(0.8675342, 1), 0.9);
        assert_eq!(round_value(0.8675342, 2), 0.87);
        assert_eq!(round_value(-0.05, 1), -0.1);
        assert_eq!(round_value(2.5, 0), 3.0);
    }

    #[test]
    fn network_rounds_output_layer_only() {
        let nn = crate::models::NnParams {
            w1: DMatrix::from_element(1, 2, 0.123),
            b1: DVector::from_element(2, 0.456),
            w2: DVector::from_element(2, 0.789),
            b2: 0.111,
        };
        let r = round_params(&ModelParams::network(nn), 1);
        let nn = r.nn().unwrap();
        assert_eq!(nn.w2[0], 0.8);
        assert_eq!(nn.w1[(0, 0)], 0.123);
        assert_eq!(nn.b2, 0.111);
    }

    #[test]
    fn ridge_toy_approximation_is_zero() {
        let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let p = ModelParams::primal(DVector::from_vec(vec![0.5, 0.5]));
        let g = grad_lambda_approx(&Algorithm::Ridge.into(), &p, &ds, None, &Masking::default()).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn denominators() {
        let m = Masking::default();
        let (l2, l1) = approximation_denominators(&DVector::from_vec(vec![1.0, -1.0, 1.0]), &m);
        assert_eq!((l2, l1), (3.0, 3.0));
        let (l2, l1) = approximation_denominators(&DVector::from_element(10, 0.1), &m);
        assert!((l2 - 0.1).abs() < 1e-15);
        assert_eq!(l1, 10.0);
    }

    #[test]
    fn fit_recovers_exact_curve() {
        let x = [1e-3, 2e-3, 5e-3, 1e-2];
        let y: Vec<f64> = x.iter().map(|d| 3.0 * d + 40.0 * d * d).collect();
        let (s, q) = fit_linear_quadratic(&x, &y).unwrap();
        assert!((s - 3.0).abs() < 1e-9 && (q - 40.0).abs() < 1e-6, "{s} {q}");
    }

    #[test]
    fn unsupported_algorithms() {
        let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let p = ModelParams::primal(DVector::from_vec(vec![0.5, 0.5]));
        let spec = AlgorithmSpec::new(Algorithm::SvmHinge);
        assert!(matches!(
            grad_lambda_approx(&spec, &p, &ds, None, &Masking::default()),
            Err(Error::UnsupportedAlgorithm(_))
        ));
        let cfg = TrainConfig::default();
        assert!(perturbation_curve(&spec, &Hyperparams::new(1.0), &ds, &cfg, 0, &[1e-3]).is_err());
    }
}
