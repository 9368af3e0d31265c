use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hypersteal::attack::steal;
use hypersteal::data::{load_csv, preprocess, preprocess_pair, split, synth_gaussian, Dataset, TargetColumn, Task};
use hypersteal::defense::{defense_sweep, perturbation_curve};
use hypersteal::experiments::{compare_strategies, cross_validate, run_strategy, Method, DEFAULT_FOLDS, DEFAULT_GRID};
use hypersteal::kernels::{gram_gaussian_auto, GramMatrix};
use hypersteal::models::{train, Algorithm, AlgorithmSpec, Hyperparams, ModelDocument, ModelParams, TrainConfig};
use hypersteal::report::{write_report, Format, Tabular};
use hypersteal::Error;

#[derive(Parser)]
#[command(name = "hypersteal", version, about = "Recover regularization hyperparameters from trained models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as JSON.
    Train(Common),
    /// Estimate λ from a trained model (or train one at --lambda first).
    Steal {
        #[command(flatten)]
        common: Common,
        /// Model JSON written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rounding sweep on a train/test split.
    Defend(Common),
    /// Perturb one coordinate of an exact minimizer and track the estimate.
    Theory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        coord: usize,
        /// Comma-separated perturbation sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-6, 1e-5, 1e-4, 1e-3])]
        deltas: Vec<f64>,
    },
    /// k-fold grid search.
    Cv(Common),
    /// Compare M1/M2/M3 (all three unless --method is given).
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
        /// Use a synthetic two-Gaussian set with this many rows per class
        /// instead of --data.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 10)]
        dim: usize,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// CSV file with one instance per row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Defaults to the algorithm's task.
    #[arg(long)]
    task: Option<Task>,
    /// Target column: header name, 0-based index, or `last`.
    #[arg(long, default_value = "last")]
    target: TargetColumn,
    /// Skip centering / row normalization.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5])]
    decimals: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Train share for `defend` splits; sample share for M2/M3.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: Format,
    /// Treat unconverged solvers and fully masked attacks as failures.
    #[arg(long)]
    strict: bool,
}

/// A failure together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_numerical() { 3 } else { 2 }, message: e.to_string() }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

type CliResult<T> = Result<T, Failure>;

impl Common {
    fn spec(&self) -> CliResult<AlgorithmSpec> {
        let id = self.algorithm.ok_or_else(|| invalid("--algorithm is required"))?;
        let spec = AlgorithmSpec::new(id);
        Ok(match self.sigma {
            Some(s) if id.is_kernel() => spec.with_sigma(s),
            Some(_) => return Err(invalid(format!("{id} takes no --sigma"))),
            None => spec,
        })
    }

    fn hyperparams(&self, id: Algorithm) -> CliResult<Hyperparams> {
        let lambda = self.lambda.ok_or_else(|| invalid("--lambda is required"))?;
        let hp = match self.lambda2 {
            Some(l2) => Hyperparams::elastic(lambda, l2),
            None => Hyperparams::new(lambda),
        };
        hp.validate_for(id)?;
        Ok(hp)
    }

    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default().with_seed(self.seed);
        if let Some(n) = self.max_iters {
            cfg = cfg.with_max_iters(n);
        }
        if let Some(t) = self.tol {
            cfg = cfg.with_tol(t);
        }
        cfg
    }

    fn task(&self, spec: &AlgorithmSpec) -> CliResult<Task> {
        let task = self.task.unwrap_or(spec.task());
        if task != spec.task() {
            return Err(invalid(format!("{} is a {} algorithm", spec.id, spec.task())));
        }
        Ok(task)
    }

    fn raw_data(&self, task: Task) -> CliResult<Dataset> {
        let path = self.data.as_ref().ok_or_else(|| invalid("--data is required"))?;
        Ok(load_csv(path, &self.target, task)?)
    }

    fn data(&self, task: Task) -> CliResult<Dataset> {
        let raw = self.raw_data(task)?;
        Ok(if self.raw { raw } else { preprocess(&raw, task)? })
    }

    fn split(&self, raw: &Dataset, task: Task) -> CliResult<(Dataset, Dataset)> {
        let (a, b) = split(raw, self.fraction.unwrap_or(0.5), self.seed)?;
        Ok(if self.raw { (a, b) } else { preprocess_pair(&a, &b, task)? })
    }

    fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec())
    }

    fn emit<T: Serialize + Tabular>(&self, items: &[T]) -> CliResult<()> {
        match &self.out {
            Some(path) => {
                let file = fs::File::create(path).map_err(|e| Failure::from(Error::Io { path: path.clone(), source: e }))?;
                write_report(items, self.format, io::BufWriter::new(file))?;
            }
            None => write_report(items, self.format, io::stdout().lock())?,
        }
        Ok(())
    }
}

fn gram(spec: &AlgorithmSpec, ds: &Dataset) -> CliResult<Option<GramMatrix>> {
    match spec.kernel_sigma {
        Some(sigma) => {
            let k = gram_gaussian_auto(ds, sigma)?;
            if k.auto_jitter() {
                eprintln!("warning: gram matrix needed jitter {:e} on the diagonal", k.jitter());
            }
            Ok(Some(k))
        }
        None => Ok(None),
    }
}

fn check_converged(params: &ModelParams, strict: bool) -> CliResult<()> {
    let r = &params.solver_report;
    if r.degenerate {
        eprintln!("warning: regularization forces all-zero parameters");
    }
    if !r.converged {
        let msg = format!("solver stopped after {} iterations (last change {:e})", r.iterations, r.final_change);
        if strict {
            return Err(Failure { code: 3, message: msg });
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(c) => {
            let spec = c.spec()?;
            let hp = c.hyperparams(spec.id)?;
            let ds = c.data(c.task(&spec)?)?;
            let k = gram(&spec, &ds)?;
            let params = train(&spec, &hp, &ds, k.as_ref(), &c.config())?;
            check_converged(&params, c.strict)?;
            if c.format != Format::Json {
                return Err(invalid("models are written as JSON only"));
            }
            let json = ModelDocument::new(spec, hp, &params).to_json()?;
            match &c.out {
                Some(p) => fs::write(p, json).map_err(|e| Failure::from(Error::Io { path: p.clone(), source: e }))?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Steal { common: c, model } => {
            let (spec, truth, params, ds) = match model {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Failure::from(Error::Io { path, source: e }))?;
                    let doc = ModelDocument::from_json(&text)?;
                    let spec = doc.algorithm;
                    let ds = c.data(c.task(&spec)?)?;
                    let truth = c.lambda.map(|_| c.hyperparams(spec.id)).transpose()?.or(Some(doc.hyperparams));
                    (spec, truth, doc.params()?, ds)
                }
                None => {
                    let spec = c.spec()?;
                    let hp = c.hyperparams(spec.id)?;
                    let ds = c.data(c.task(&spec)?)?;
                    let k = gram(&spec, &ds)?;
                    let params = train(&spec, &hp, &ds, k.as_ref(), &c.config())?;
                    check_converged(&params, c.strict)?;
                    (spec, Some(hp), params, ds)
                }
            };
            let k = gram(&spec, &ds)?;
            match steal(&spec, truth.as_ref(), &params, &ds, k.as_ref(), &c.config().masking) {
                Ok(report) => {
                    for w in &report.warnings {
                        eprintln!("warning: {w}");
                    }
                    c.emit(&[report])
                }
                Err(Error::AllMasked) if !c.strict => {
                    eprintln!("warning: {}", Error::AllMasked);
                    Ok(())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Defend(c) => {
            let spec = c.spec()?;
            let hp = c.hyperparams(spec.id)?;
            let task = c.task(&spec)?;
            let (tr, te) = c.split(&c.raw_data(task)?, task)?;
            let sweep = defense_sweep(&spec, &hp, &tr, &te, &c.config(), &c.decimals)?;
            c.emit(&[sweep])
        }
        Command::Theory { common: c, coord, deltas } => {
            let spec = c.spec()?;
            let hp = c.hyperparams(spec.id)?;
            let ds = c.data(c.task(&spec)?)?;
            let curve = perturbation_curve(&spec, &hp, &ds, &c.config(), coord, &deltas)?;
            c.emit(&[curve])
        }
        Command::Cv(c) => {
            let spec = c.spec()?;
            let ds = c.data(c.task(&spec)?)?;
            let cv = cross_validate(&spec, &ds, &c.grid(), c.folds, &c.config(), c.seed)?;
            if cv.failures > 0 {
                eprintln!("warning: {} of {} trainings failed", cv.failures, cv.trainings);
            }
            c.emit(&[cv])
        }
        Command::Experiment { common: c, method, synthetic, dim } => {
            let spec = c.spec()?;
            let task = c.task(&spec)?;
            let raw = match synthetic {
                Some(n) => synth_gaussian(n, dim, c.seed)?,
                None => c.raw_data(task)?,
            };
            let (tr, te) = split(&raw, 0.5, c.seed)?;
            let cfg = c.config();
            let q = c.fraction.unwrap_or(0.01);
            let reports = match method {
                Some(m) => {
                    let fraction = (m != Method::M1).then_some(q);
                    vec![run_strategy(m, &spec, &tr, &te, &c.grid(), c.folds, fraction, &cfg, c.seed)?]
                }
                None => compare_strategies(&spec, &tr, &te, &c.grid(), c.folds, q, &cfg, c.seed)?,
            };
            c.emit(&reports)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
