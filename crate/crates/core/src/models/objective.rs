use nalgebra::{DMatrix, DVector};

use super::{Algorithm, AlgorithmSpec, Hyperparams, Loss, Masking, ModelParams, NnParams, ParamBlock, Regularizer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵗ)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Cross entropy of a {0,1} label against the logistic of score `z`.
pub(crate) fn cross_entropy(y: f64, z: f64) -> f64 {
    y * softplus(-z) + (1.0 - y) * softplus(z)
}

/// {0,1} → {−1,+1}
pub(crate) fn signed_label(y: f64) -> f64 {
    2.0 * y - 1.0
}

/// `sig(X W₁ + 1 b₁ᵀ)`, one row per instance.
pub fn nn_hidden_activations(nn: &NnParams, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = x * &nn.w1;
    for mut row in a.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sigmoid(*v + nn.b1[j]);
        }
    }
    a
}

/// Raw scores the loss is applied to: `Xw`, `Kα`, or the network output
/// before any output sigmoid.
pub(crate) fn scores(params: &ModelParams, ds: &Dataset, k: Option<&GramMatrix>) -> DVector<f64> {
    match &params.block {
        ParamBlock::Primal(w) => ds.x() * w,
        ParamBlock::Dual(a) => k.expect("kernel scores need a gram matrix").mul(a),
        ParamBlock::Network(nn) => nn_hidden_activations(nn, ds.x()) * &nn.w2 + DVector::from_element(ds.n(), nn.b2),
    }
}

pub(crate) fn data_loss(loss: Loss, y: &DVector<f64>, s: &DVector<f64>) -> f64 {
    match loss {
        Loss::LeastSquares => (y - s).norm_squared(),
        Loss::CrossEntropy => y.iter().zip(s.iter()).map(|(&t, &z)| cross_entropy(t, z)).sum(),
        Loss::Hinge => y.iter().zip(s.iter()).map(|(&t, &z)| (1.0 - signed_label(t) * z).max(0.0)).sum(),
        Loss::SquaredHinge => {
            y.iter().zip(s.iter()).map(|(&t, &z)| (1.0 - signed_label(t) * z).max(0.0).powi(2)).sum()
        }
    }
}

pub(crate) fn check_inputs(
    spec: &AlgorithmSpec,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
) -> Result<()> {
    params.check_family(spec, ds.n(), ds.m())?;
    if spec.id.is_kernel() {
        match k {
            Some(k) if k.n() == ds.n() => {}
            Some(k) => return Err(Error::LengthMismatch { left: ds.n(), right: k.n() }),
            None => return Err(Error::invalid(format!("{} needs a gram matrix", spec.id))),
        }
    }
    Ok(())
}

/// Value of the regularized training objective at `params`.
pub fn objective(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
) -> Result<f64> {
    check_inputs(spec, params, ds, k)?;
    let s = scores(params, ds, k);
    let loss = data_loss(spec.id.loss(), ds.y(), &s);
    let lambda = hp.lambda;
    let penalty = match &params.block {
        ParamBlock::Primal(w) => match spec.id.regularizer() {
            Regularizer::L2 => lambda * w.norm_squared(),
            Regularizer::L1 => lambda * w.lp_norm(1),
            Regularizer::ElasticNet => lambda * w.lp_norm(1) + hp.lambda2.unwrap_or(0.0) * w.norm_squared(),
        },
        // `s` is Kα here.
        ParamBlock::Dual(alpha) => match spec.id.regularizer() {
            Regularizer::L1 => lambda * s.lp_norm(1),
            _ => lambda * alpha.dot(&s),
        },
        ParamBlock::Network(nn) => {
            let scale = if spec.id == Algorithm::NnClassification { 0.5 } else { 1.0 };
            scale * lambda * (nn.w1.norm_squared() + nn.w2.norm_squared())
        }
    };
    Ok(loss + penalty)
}

/// Derivative of the data loss with respect to the scores, with the hinge
/// masking applied. For least squares this is `2(s − y)`; for cross entropy
/// `h − y`; for hinge losses `−y±` or `−2y±(1 − margin)` on active rows.
pub(crate) fn loss_score_gradient(loss: Loss, y: &DVector<f64>, s: &DVector<f64>, mask: &Masking) -> DVector<f64> {
    DVector::from_fn(y.len(), |i, _| {
        let (t, z) = (y[i], s[i]);
        match loss {
            Loss::LeastSquares => 2.0 * (z - t),
            Loss::CrossEntropy => sigmoid(z) - t,
            Loss::Hinge | Loss::SquaredHinge => {
                let yy = signed_label(t);
                let margin = yy * z;
                if !mask.hinge_active(margin) {
                    0.0
                } else if loss == Loss::Hinge {
                    -yy
                } else {
                    -2.0 * yy * (1.0 - margin)
                }
            }
        }
    })
}

/// Gradient of the objective with respect to the attacked parameter block
/// (`w`, `α`, or a network's `w₂`). Non-differentiable points use sign 0 for
/// L1 coordinates at or below the zero threshold and drop hinge terms on the
/// margin.
pub fn subgradient(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    mask: &Masking,
) -> Result<DVector<f64>> {
    check_inputs(spec, params, ds, k)?;
    let s = scores(params, ds, k);
    let lambda = hp.lambda;
    let id = spec.id;
    let g = match &params.block {
        ParamBlock::Primal(w) => {
            let r = loss_score_gradient(id.loss(), ds.y(), &s, mask);
            let mut g = ds.x().tr_mul(&r);
            match id.regularizer() {
                Regularizer::L2 => g += w * (2.0 * lambda),
                Regularizer::L1 => g += w.map(|v| mask.sign(v)) * lambda,
                Regularizer::ElasticNet => {
                    let l2 = hp.lambda2.unwrap_or(0.0);
                    for (gi, &wi) in g.iter_mut().zip(w.iter()) {
                        let sg = mask.sign(wi);
                        *gi += lambda * sg + 2.0 * l2 * wi * sg.abs();
                    }
                }
            }
            g
        }
        ParamBlock::Dual(alpha) => {
            let k = k.expect("checked above");
            let r = loss_score_gradient(id.loss(), ds.y(), &s, mask);
            // ∇α = K (∂loss/∂s + λ ∂R/∂s)
            let inner = match id.regularizer() {
                Regularizer::L1 => r + s.map(|v| mask.sign(v)) * lambda,
                _ => r + alpha * (2.0 * lambda),
            };
            k.mul(&inner)
        }
        ParamBlock::Network(nn) => {
            let h = nn_hidden_activations(nn, ds.x());
            let (r, reg) = match id {
                Algorithm::NnClassification => (s.map(sigmoid) - ds.y(), lambda),
                _ => ((&s - ds.y()) * 2.0, 2.0 * lambda),
            };
            h.tr_mul(&r) + &nn.w2 * reg
        }
    };
    Ok(g)
}

/// Objective value and full gradient of a network with respect to all of
/// its parameters.
pub(crate) fn nn_value_and_grad(
    id: Algorithm,
    lambda: f64,
    nn: &NnParams,
    ds: &Dataset,
) -> (f64, NnParams) {
    let x = ds.x();
    let y = ds.y();
    let h = nn_hidden_activations(nn, x);
    let s = &h * &nn.w2 + DVector::from_element(ds.n(), nn.b2);
    let classify = id == Algorithm::NnClassification;
    let reg_scale = if classify { 0.5 } else { 1.0 };
    let (loss, r) = if classify {
        (data_loss(Loss::CrossEntropy, y, &s), s.map(sigmoid) - y)
    } else {
        let diff = &s - y;
        (diff.norm_squared(), diff * 2.0)
    };
    let value = loss + reg_scale * lambda * (nn.w1.norm_squared() + nn.w2.norm_squared());

    let w2 = h.tr_mul(&r) + &nn.w2 * (2.0 * reg_scale * lambda);
    let b2 = r.sum();
    // Back through the hidden sigmoid: ∂/∂A = (r w₂ᵀ) ⊙ H ⊙ (1 − H)
    let mut da = &r * nn.w2.transpose();
    da.zip_apply(&h, |d, hv| *d *= hv * (1.0 - hv));
    let w1 = x.tr_mul(&da) + &nn.w1 * (2.0 * reg_scale * lambda);
    let b1 = DVector::from_iterator(da.ncols(), da.column_iter().map(|c| c.sum()));
    (value, NnParams { w1, b1, w2, b2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AlgorithmSpec;

    fn toy_eye() -> Dataset {
        Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap()
    }

    #[test]
    fn ridge_at_zero_is_target_energy() {
        let ds = toy_eye();
        let spec = AlgorithmSpec::new(Algorithm::Ridge);
        let v = objective(&spec, &Hyperparams::new(3.0), &ModelParams::primal(DVector::zeros(2)), &ds, None).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn lasso_exact_fit() {
        let ds = toy_eye();
        let spec = AlgorithmSpec::new(Algorithm::Lasso);
        let p = ModelParams::primal(DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(objective(&spec, &Hyperparams::new(1.0), &p, &ds, None).unwrap(), 2.0);
    }

    #[test]
    fn logistic_matches_hand_sum() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.3, 2.0, 0.0, -1.0, 1.5, 1.5]);
        let y = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();
        let w = DVector::from_vec(vec![0.4, -0.7]);
        let lambda = 0.3;
        let mut expected = lambda * w.norm_squared();
        for i in 0..4 {
            let z: f64 = x[(i, 0)] * w[0] + x[(i, 1)] * w[1];
            let h = 1.0 / (1.0 + (-z).exp());
            expected -= y[i] * h.ln() + (1.0 - y[i]) * (1.0 - h).ln();
        }
        let spec = AlgorithmSpec::new(Algorithm::L2Logistic);
        let got = objective(&spec, &Hyperparams::new(lambda), &ModelParams::primal(w), &ds, None).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn lasso_zero_coordinate_uses_sign_zero() {
        let ds = toy_eye();
        let spec = AlgorithmSpec::new(Algorithm::Lasso);
        let p = ModelParams::primal(DVector::from_vec(vec![0.0, 0.5]));
        let g = subgradient(&spec, &Hyperparams::new(1.0), &p, &ds, None, &Masking::default()).unwrap();
        // first coordinate: 2(0 − 1) + λ·0
        assert_eq!(g[0], -2.0);
        assert_eq!(g[1], 2.0 * (0.5 - 1.0) + 1.0);
    }

    #[test]
    fn family_mismatch() {
        let ds = toy_eye();
        let spec = AlgorithmSpec::new(Algorithm::Ridge);
        let p = ModelParams::dual(DVector::zeros(2));
        assert!(matches!(objective(&spec, &Hyperparams::new(1.0), &p, &ds, None), Err(Error::FamilyMismatch(_))));
    }

    #[test]
    fn stable_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((cross_entropy(1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
