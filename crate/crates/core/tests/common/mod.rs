#![allow(dead_code)]
pub mod props;

use hypersteal::kernels::gram_from_instances;
use hypersteal::models::NnParams;
use hypersteal::prelude::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn diabetes_raw() -> Dataset {
    load_csv(fixture("diabetes.csv"), &TargetColumn::Last, Task::Regression).unwrap()
}

pub fn diabetes() -> Dataset {
    preprocess(&diabetes_raw(), Task::Regression).unwrap()
}

pub fn iris() -> Dataset {
    let raw = load_csv(fixture("iris_binary.csv"), &TargetColumn::Last, Task::Classification).unwrap();
    preprocess(&raw, Task::Classification).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// Small random dataset for `id`: Gaussian-ish features in [-1, 1] and
/// either continuous targets or labels with both classes present.
pub fn random_dataset(id: Algorithm, n: usize, m: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, m, |_, _| r.random_range(-1.0..1.0));
    let y = match id.task() {
        Task::Regression => DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0)),
        Task::Classification => DVector::from_fn(n, |i, _| (i % 2) as f64),
    };
    Dataset::new(x, y).unwrap()
}

pub fn gram_for(spec: &AlgorithmSpec, ds: &Dataset) -> Option<GramMatrix> {
    spec.id.is_kernel().then(|| gram_gaussian_auto(ds, spec.kernel_sigma.unwrap()).unwrap())
}

/// A kernel spec with bandwidth 1 (the small random datasets live in the
/// unit cube, where the default bandwidth makes K nearly rank one).
pub fn spec(id: Algorithm) -> AlgorithmSpec {
    let s = AlgorithmSpec::new(id);
    if id.is_kernel() {
        s.with_sigma(1.0)
    } else {
        s
    }
}

pub fn gram_unit(ds: &Dataset) -> GramMatrix {
    gram_from_instances(ds.x(), 1.0, 1e-8).unwrap()
}

/// Random parameters of the right family for `id` on `ds`.
pub fn random_params(spec: &AlgorithmSpec, ds: &Dataset, seed: u64) -> ModelParams {
    let mut r = rng(seed);
    match spec.id.family() {
        hypersteal::models::Family::Linear => ModelParams::primal(uniform_vec(&mut r, ds.m(), 1.0)),
        hypersteal::models::Family::Kernel => ModelParams::dual(uniform_vec(&mut r, ds.n(), 1.0)),
        hypersteal::models::Family::Network => {
            let d = spec.nn_hidden.unwrap();
            ModelParams::network(NnParams {
                w1: DMatrix::from_fn(ds.m(), d, |_, _| r.random_range(-1.0..1.0)),
                b1: uniform_vec(&mut r, d, 0.5),
                w2: uniform_vec(&mut r, d, 1.0),
                b2: r.random_range(-0.5..0.5),
            })
        }
    }
}

/// Central differences of the objective along the attacked parameter block.
pub fn objective_fd(
    spec: &AlgorithmSpec,
    hp: &Hyperparams,
    params: &ModelParams,
    ds: &Dataset,
    k: Option<&GramMatrix>,
    step: f64,
) -> DVector<f64> {
    let len = params.attack_vector().len();
    DVector::from_fn(len, |i, _| {
        let mut plus = params.clone();
        plus.attack_vector_mut()[i] += step;
        let mut minus = params.clone();
        minus.attack_vector_mut()[i] -= step;
        (objective(spec, hp, &plus, ds, k).unwrap() - objective(spec, hp, &minus, ds, k).unwrap()) / (2.0 * step)
    })
}

pub fn relative_inf(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).amax() / exact.amax().max(1e-8)
}

/// Objectives that are continuously differentiable in the attacked block.
pub const SMOOTH: [Algorithm; 8] = [
    Algorithm::Ridge,
    Algorithm::KernelRidge,
    Algorithm::L2Logistic,
    Algorithm::L2KernelLogistic,
    Algorithm::SvmSquaredHinge,
    Algorithm::KernelSvmSquaredHinge,
    Algorithm::NnRegression,
    Algorithm::NnClassification,
];
