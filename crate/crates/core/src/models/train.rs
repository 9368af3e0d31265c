use nalgebra::{Cholesky, DMatrix, DVector, LU};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{cross_entropy, loss_score_gradient, nn_value_and_grad, sigmoid, signed_label};
use super::{
    objective, Algorithm, AlgorithmSpec, Hyperparams, Loss, ModelParams, NnParams, ParamBlock, SolverReport,
    TrainConfig,
};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::kernels::{solve_gram, GramMatrix};

/// Armijo sufficient-decrease constant shared by all line searches.
const ARMIJO: f64 = 1e-4;
/// Line searches give up once the step has shrunk below this.
const MIN_STEP: f64 = 1e-14;

/// Smallest L1 weight that forces the all-zero LASSO / ENet solution:
/// `2‖Xᵀy‖∞` for the loss `‖y − Xw‖²`.
pub fn lasso_lambda_max(ds: &Dataset) -> f64 {
    2.0 * ds.x().tr_mul(ds.y()).amax()
}

struct Run {
    iterations: usize,
    final_change: f64,
    converged: bool,
    degenerate: bool,
    cost_units: u64,
}

impl Run {
    fn direct(rows: usize) -> Self {
        Run { iterations: 1, final_change: 0.0, converged: true, degenerate: false, cost_units: (rows * rows) as u64 }
    }

    fn iterative(rows: usize, iterations: usize, final_change: f64, converged: bool) -> Self {
        Run {
            iterations,
            final_change,
            converged,
            degenerate: false,
            cost_units: (rows * iterations.max(1)) as u64,
        }
    }

    fn report(self, solver: &str) -> SolverReport {
        SolverReport {
            solver: solver.to_string(),
            iterations: self.iterations,
            final_change: self.final_change,
            converged: self.converged,
            degenerate: self.degenerate,
            cost_units: self.cost_units,
        }
    }
}

/// Fit `spec` at `hp` on `ds`. Kernel algorithms need the Gram matrix of
/// `ds`; the same matrix (with the same jitter) must later be given to the
/// attack.
///
/// Hitting `max_iters` is not an error: the parameters are returned with
/// `solver_report.converged == false`.
pub fn train(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    spec.validate()?;
    hp.validate_for(spec.id)?;
    cfg.validate()?;
    if spec.task() == Task::Classification && !ds.is_binary() {
        return Err(Error::invalid(format!("{} needs targets in {{0, 1}}", spec.id)));
    }
    let k = if spec.id.is_kernel() {
        let k = k.ok_or_else(|| Error::invalid(format!("{} needs a gram matrix", spec.id)))?;
        if k.n() != ds.n() {
            return Err(Error::LengthMismatch { left: ds.n(), right: k.n() });
        }
        let sigma = spec.kernel_sigma.unwrap_or_default();
        if (k.sigma() - sigma).abs() > 1e-12 * sigma {
            return Err(Error::invalid(format!("gram matrix built with sigma {} but spec says {sigma}", k.sigma())));
        }
        Some(k)
    } else {
        None
    };

    let lambda = hp.lambda;
    let n = ds.n();
    let (block, run, solver) = match spec.id {
        Algorithm::Ridge => {
            let w = ridge(ds, lambda)?;
            (ParamBlock::Primal(w), Run::direct(n), "cholesky")
        }
        Algorithm::KernelRidge => {
            let k = k.expect("kernel");
            let mut a = k.values().clone();
            add_diagonal(&mut a, lambda);
            let alpha = spd_solve(&a, ds.y()).ok_or(Error::NotPositiveDefinite { jitter: k.jitter() })?;
            (ParamBlock::Dual(alpha), Run::direct(n), "cholesky")
        }
        Algorithm::Lasso | Algorithm::ElasticNet => {
            let (w, run) = coordinate_descent(ds, lambda, hp.lambda2.unwrap_or(0.0), cfg);
            (ParamBlock::Primal(w), run, "coordinate-descent")
        }
        Algorithm::L2Logistic => {
            let (w, run) = logistic_newton(ds, lambda, cfg);
            (ParamBlock::Primal(w), run, "newton")
        }
        Algorithm::L1Logistic => {
            let (w, run) = logistic_proximal(ds, lambda, cfg);
            (ParamBlock::Primal(w), run, "proximal-gradient")
        }
        Algorithm::L2KernelLogistic => {
            let (a, run) = kernel_logistic_newton(ds, k.expect("kernel"), lambda, cfg);
            (ParamBlock::Dual(a), run, "newton")
        }
        Algorithm::L1KernelLogistic => {
            let (a, run) = kernel_logistic_l1(ds, k.expect("kernel"), lambda)?;
            (ParamBlock::Dual(a), run, "closed-form")
        }
        Algorithm::SvmHinge => {
            let (w, run) = svm_dual_cd(ds, lambda, cfg);
            (ParamBlock::Primal(w), run, "dual-coordinate-descent")
        }
        Algorithm::KernelSvmHinge => {
            let (a, run) = kernel_svm_dual_cd(ds, k.expect("kernel"), lambda, cfg);
            (ParamBlock::Dual(a), run, "dual-coordinate-descent")
        }
        Algorithm::SvmSquaredHinge => {
            let (w, run) = svm_squared_newton(ds, lambda, cfg);
            (ParamBlock::Primal(w), run, "newton")
        }
        Algorithm::KernelSvmSquaredHinge => {
            let (a, run) = kernel_svm_squared_newton(ds, k.expect("kernel"), lambda, cfg);
            (ParamBlock::Dual(a), run, "newton")
        }
        Algorithm::NnRegression | Algorithm::NnClassification => {
            let hidden = spec.nn_hidden.unwrap_or(super::DEFAULT_NN_HIDDEN);
            let (nn, run) = network_gd(spec.id, ds, hidden, lambda, cfg);
            (ParamBlock::Network(nn), run, "gradient-descent")
        }
    };

    let mut params = ModelParams { block, trained_objective: f64::NAN, solver_report: run.report(solver) };
    if !params.is_finite() {
        return Err(Error::NotConverged {
            iterations: params.solver_report.iterations,
            last_change: params.solver_report.final_change,
        });
    }
    params.trained_objective = objective(spec, hp, &params, ds, k)?;
    Ok(params)
}

fn add_diagonal(m: &mut DMatrix<f64>, v: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += v;
    }
}

/// Cholesky solve with one refinement step.
fn spd_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = Cholesky::new(a.clone())?;
    let mut v = chol.solve(rhs);
    let r = rhs - a * &v;
    v += chol.solve(&r);
    Some(v)
}

fn ridge(ds: &Dataset, lambda: f64) -> Result<DVector<f64>> {
    let x = ds.x();
    let mut a = x.tr_mul(x);
    add_diagonal(&mut a, lambda);
    spd_solve(&a, &x.tr_mul(ds.y())).ok_or(Error::SingularNormalEquations(f64::INFINITY))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `‖y − Xw‖² + l1‖w‖₁ + l2‖w‖²` on the
/// precomputed Gram matrix `XᵀX`.
fn coordinate_descent(ds: &Dataset, l1: f64, l2: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let x = ds.x();
    let m = ds.m();
    let n = ds.n();
    let c = x.tr_mul(ds.y());
    let mut w = DVector::zeros(m);
    if l1 >= 2.0 * c.amax() {
        let run = Run { iterations: 0, final_change: 0.0, converged: true, degenerate: true, cost_units: n as u64 };
        return (w, run);
    }
    let g = x.tr_mul(x);
    let mut gw = DVector::zeros(m);
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < cfg.max_iters {
        sweeps += 1;
        change = 0.0;
        for j in 0..m {
            let gjj = g[(j, j)];
            let denom = gjj + l2;
            let old = w[j];
            let rho = c[j] - gw[j] + gjj * old;
            let new = if denom > 0.0 { soft_threshold(rho, l1 / 2.0) / denom } else { 0.0 };
            let delta = new - old;
            if delta != 0.0 {
                w[j] = new;
                gw.axpy(delta, &g.column(j), 1.0);
                change = f64::max(change, delta.abs());
            }
        }
        if sweeps % 64 == 0 {
            gw = &g * &w;
        }
        if change <= cfg.tol {
            break;
        }
    }
    let converged = change <= cfg.tol;
    (w, Run::iterative(n, sweeps, change, converged))
}

struct Iterate {
    x: DVector<f64>,
    iterations: usize,
    change: f64,
    converged: bool,
}

/// Damped Newton with Armijo backtracking. `step` returns the Newton
/// direction and the directional derivative of `f` along it.
fn damped_newton(
    x0: DVector<f64>,
    cfg: &TrainConfig,
    f: impl Fn(&DVector<f64>) -> f64,
    step: impl Fn(&DVector<f64>) -> Option<(DVector<f64>, f64)>,
) -> Iterate {
    let mut x = x0;
    let mut fx = f(&x);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let Some((d, slope)) = step(&x) else { break };
        iterations += 1;
        let flat = slope.abs() <= 1e-15 * (1.0 + fx.abs());
        if !(slope < 0.0) {
            // Not a descent direction: only acceptable at numerical stationarity.
            change = 0.0;
            converged = flat;
            break;
        }
        let mut t = 1.0;
        let accepted = loop {
            let cand = &x + &d * t;
            let fc = f(&cand);
            if fc <= fx + ARMIJO * t * slope {
                x = cand;
                fx = fc;
                break true;
            }
            t *= 0.5;
            if t < MIN_STEP {
                break false;
            }
        };
        if !accepted {
            change = 0.0;
            converged = flat;
            break;
        }
        change = t * d.amax();
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    Iterate { x, iterations, change, converged }
}

fn ce_sum(y: &DVector<f64>, z: &DVector<f64>) -> f64 {
    y.iter().zip(z.iter()).map(|(&t, &s)| cross_entropy(t, s)).sum()
}

fn logistic_newton(ds: &Dataset, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let x = ds.x();
    let y = ds.y();
    let m = ds.m();
    let f = |w: &DVector<f64>| ce_sum(y, &(x * w)) + lambda * w.norm_squared();
    let step = |w: &DVector<f64>| {
        let z = x * w;
        let h = z.map(sigmoid);
        let g = x.tr_mul(&(&h - y)) + w * (2.0 * lambda);
        let d = h.map(|v| v * (1.0 - v));
        let mut xd = x.clone();
        for (i, mut row) in xd.row_iter_mut().enumerate() {
            row *= d[i];
        }
        let mut hess = x.tr_mul(&xd);
        add_diagonal(&mut hess, 2.0 * lambda);
        let dir = -spd_solve(&hess, &g)?;
        let slope = g.dot(&dir);
        Some((dir, slope))
    };
    let it = damped_newton(DVector::zeros(m), cfg, f, step);
    (it.x, Run::iterative(ds.n(), it.iterations, it.change, it.converged))
}

/// ISTA with backtracking on the cross-entropy term. Convergence is
/// measured on the gradient mapping `(w − w⁺)/t`.
fn logistic_proximal(ds: &Dataset, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let x = ds.x();
    let y = ds.y();
    let smooth = |w: &DVector<f64>| ce_sum(y, &(x * w));
    let mut w = DVector::zeros(ds.m());
    let mut t = cfg.step_size;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let fw = smooth(&w);
        let g = x.tr_mul(&((x * &w).map(sigmoid) - y));
        t *= 2.0;
        let next = loop {
            let cand = (&w - &g * t).map(|v| soft_threshold(v, t * lambda));
            let diff = &cand - &w;
            if smooth(&cand) <= fw + g.dot(&diff) + diff.norm_squared() / (2.0 * t) || t < MIN_STEP {
                break cand;
            }
            t *= 0.5;
        };
        change = (&next - &w).amax() / t;
        w = next;
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    (w, Run::iterative(ds.n(), iterations, change, converged))
}

fn kernel_logistic_newton(ds: &Dataset, k: &GramMatrix, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let kv = k.values();
    let y = ds.y();
    let n = ds.n();
    let f = |a: &DVector<f64>| {
        let s = kv * a;
        ce_sum(y, &s) + lambda * a.dot(&s)
    };
    // With ∇f = K g̃, the Newton system K(DK + 2λI)Δ = −K g̃ reduces to
    // (DK + 2λI)Δ = −g̃.
    let step = |a: &DVector<f64>| {
        let s = kv * a;
        let h = s.map(sigmoid);
        let gt = &h - y + a * (2.0 * lambda);
        let mut sys = kv.clone();
        for (i, mut row) in sys.row_iter_mut().enumerate() {
            row *= h[i] * (1.0 - h[i]);
        }
        add_diagonal(&mut sys, 2.0 * lambda);
        let dir = -LU::new(sys).solve(&gt)?;
        let slope = (kv * &gt).dot(&dir);
        Some((dir, slope))
    };
    let it = damped_newton(DVector::zeros(n), cfg, f, step);
    (it.x, Run::iterative(n, it.iterations, it.change, it.converged))
}

/// The L1 kernel logistic objective depends on α only through `β = Kα` and
/// separates over instances in β, so the minimizer is explicit:
/// `βᵢ = ±ln((1 − λ)/λ)` for λ < ½, otherwise 0.
fn kernel_logistic_l1(ds: &Dataset, k: &GramMatrix, lambda: f64) -> Result<(DVector<f64>, Run)> {
    let n = ds.n();
    let mut run = Run::direct(n);
    if lambda >= 0.5 {
        run.degenerate = true;
        return Ok((DVector::zeros(n), run));
    }
    let margin = ((1.0 - lambda) / lambda).ln();
    let beta = ds.y().map(|t| signed_label(t) * margin);
    Ok((solve_gram(k, &beta)?, run))
}

fn dot_row(x: &DMatrix<f64>, i: usize, w: &DVector<f64>) -> f64 {
    (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum()
}

fn projected_gradient(g: f64, a: f64, c: f64) -> f64 {
    if a <= 0.0 {
        g.min(0.0)
    } else if a >= c {
        g.max(0.0)
    } else {
        g
    }
}

/// Dual coordinate descent for the hinge loss with box `[0, 1/(2λ)]`.
/// Convergence is measured by the largest projected dual gradient in a
/// sweep.
fn svm_dual_cd(ds: &Dataset, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let x = ds.x();
    let n = ds.n();
    let c = 1.0 / (2.0 * lambda);
    let yy: Vec<f64> = ds.y().iter().map(|&t| signed_label(t)).collect();
    let q: Vec<f64> = (0..n).map(|i| x.row(i).norm_squared()).collect();
    let mut dual = vec![0.0; n];
    let mut w = DVector::zeros(ds.m());
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut sweeps, mut worst) = (0, f64::INFINITY);
    while sweeps < cfg.max_iters {
        sweeps += 1;
        worst = 0.0;
        order.shuffle(&mut rng);
        for &i in &order {
            if q[i] <= 0.0 {
                continue;
            }
            let g = yy[i] * dot_row(x, i, &w) - 1.0;
            let pg = projected_gradient(g, dual[i], c);
            worst = f64::max(worst, pg.abs());
            if pg != 0.0 {
                let new = (dual[i] - g / q[i]).clamp(0.0, c);
                let delta = (new - dual[i]) * yy[i];
                dual[i] = new;
                for j in 0..x.ncols() {
                    w[j] += delta * x[(i, j)];
                }
            }
        }
        if worst <= cfg.tol {
            break;
        }
    }
    let converged = worst <= cfg.tol;
    (w, Run::iterative(n, sweeps, worst, converged))
}

fn kernel_svm_dual_cd(ds: &Dataset, k: &GramMatrix, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let kv = k.values();
    let n = ds.n();
    let c = 1.0 / (2.0 * lambda);
    let yy: Vec<f64> = ds.y().iter().map(|&t| signed_label(t)).collect();
    let mut dual = vec![0.0; n];
    // alpha = dual ⊙ y, scores = K alpha
    let mut alpha = DVector::zeros(n);
    let mut scores = DVector::zeros(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut sweeps, mut worst) = (0, f64::INFINITY);
    while sweeps < cfg.max_iters {
        sweeps += 1;
        worst = 0.0;
        order.shuffle(&mut rng);
        for &i in &order {
            let g = yy[i] * scores[i] - 1.0;
            let pg = projected_gradient(g, dual[i], c);
            worst = f64::max(worst, pg.abs());
            if pg != 0.0 {
                let new = (dual[i] - g / kv[(i, i)]).clamp(0.0, c);
                let delta = (new - dual[i]) * yy[i];
                dual[i] = new;
                alpha[i] += delta;
                scores.axpy(delta, &kv.column(i), 1.0);
            }
        }
        if sweeps % 64 == 0 {
            scores = kv * &alpha;
        }
        if worst <= cfg.tol {
            break;
        }
    }
    let converged = worst <= cfg.tol;
    (alpha, Run::iterative(n, sweeps, worst, converged))
}

fn squared_hinge_sum(y: &DVector<f64>, s: &DVector<f64>) -> f64 {
    super::objective::data_loss(Loss::SquaredHinge, y, s)
}

fn active_rows(y: &DVector<f64>, s: &DVector<f64>) -> Vec<bool> {
    y.iter().zip(s.iter()).map(|(&t, &z)| signed_label(t) * z < 1.0).collect()
}

fn svm_squared_newton(ds: &Dataset, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let x = ds.x();
    let y = ds.y();
    let exact = super::Masking { zero_threshold: 0.0, margin_tol: 0.0 };
    let f = |w: &DVector<f64>| squared_hinge_sum(y, &(x * w)) + lambda * w.norm_squared();
    let step = |w: &DVector<f64>| {
        let s = x * w;
        let r = loss_score_gradient(Loss::SquaredHinge, y, &s, &exact);
        let g = x.tr_mul(&r) + w * (2.0 * lambda);
        let active = active_rows(y, &s);
        let mut xa = x.clone();
        for (i, mut row) in xa.row_iter_mut().enumerate() {
            if !active[i] {
                row.fill(0.0);
            }
        }
        let mut hess = xa.tr_mul(&xa) * 2.0;
        add_diagonal(&mut hess, 2.0 * lambda);
        let dir = -spd_solve(&hess, &g)?;
        let slope = g.dot(&dir);
        Some((dir, slope))
    };
    let it = damped_newton(DVector::zeros(ds.m()), cfg, f, step);
    (it.x, Run::iterative(ds.n(), it.iterations, it.change, it.converged))
}

fn kernel_svm_squared_newton(ds: &Dataset, k: &GramMatrix, lambda: f64, cfg: &TrainConfig) -> (DVector<f64>, Run) {
    let kv = k.values();
    let y = ds.y();
    let n = ds.n();
    let exact = super::Masking { zero_threshold: 0.0, margin_tol: 0.0 };
    let f = |a: &DVector<f64>| {
        let s = kv * a;
        squared_hinge_sum(y, &s) + lambda * a.dot(&s)
    };
    // ∇f = K g̃ with g̃ = r + 2λα; Newton system (2 I_A K + 2λI)Δ = −g̃.
    let step = |a: &DVector<f64>| {
        let s = kv * a;
        let gt = loss_score_gradient(Loss::SquaredHinge, y, &s, &exact) + a * (2.0 * lambda);
        let active = active_rows(y, &s);
        let mut sys = kv * 2.0;
        for (i, mut row) in sys.row_iter_mut().enumerate() {
            if !active[i] {
                row.fill(0.0);
            }
        }
        add_diagonal(&mut sys, 2.0 * lambda);
        let dir = -LU::new(sys).solve(&gt)?;
        let slope = (kv * &gt).dot(&dir);
        Some((dir, slope))
    };
    let it = damped_newton(DVector::zeros(n), cfg, f, step);
    (it.x, Run::iterative(n, it.iterations, it.change, it.converged))
}

/// Seeded initialization: weights `U(−½, ½)/√fan_in`, biases zero.
pub(crate) fn init_network(m: usize, hidden: usize, seed: u64) -> NnParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s1 = 1.0 / (m as f64).sqrt();
    let s2 = 1.0 / (hidden as f64).sqrt();
    let w1 = DMatrix::from_fn(m, hidden, |_, _| rng.random_range(-0.5..0.5) * s1);
    let w2 = DVector::from_fn(hidden, |_, _| rng.random_range(-0.5..0.5) * s2);
    NnParams { w1, b1: DVector::zeros(hidden), w2, b2: 0.0 }
}

/// Full-batch gradient descent with Armijo backtracking on every network
/// parameter.
fn network_gd(id: Algorithm, ds: &Dataset, hidden: usize, lambda: f64, cfg: &TrainConfig) -> (NnParams, Run) {
    let mut p = init_network(ds.m(), hidden, cfg.seed);
    let (mut fp, mut g) = nn_value_and_grad(id, lambda, &p, ds);
    let mut t = cfg.step_size;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let gg = g.dot(&g);
        t *= 2.0;
        let mut accepted = false;
        while t >= MIN_STEP {
            let cand = p.add_scaled(&g, -t);
            let (fc, gc) = nn_value_and_grad(id, lambda, &cand, ds);
            if fc <= fp - ARMIJO * t * gg {
                change = t * g.amax();
                p = cand;
                fp = fc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            converged = g.amax() <= cfg.tol;
            change = 0.0;
            break;
        }
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    (p, Run::iterative(ds.n(), iterations, change, converged))
}
