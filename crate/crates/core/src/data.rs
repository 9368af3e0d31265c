//! Datasets: CSV ingestion, preprocessing, splitting and synthetic generators.
//!
//! Instances are stored one per row (`n × m`). Regression data is centered
//! (features *and* target, since none of the objectives carry an intercept);
//! classification data is scaled so that every instance has unit Euclidean
//! norm.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" | "reg" => Ok(Task::Regression),
            "classification" | "clf" => Ok(Task::Classification),
            other => Err(Error::invalid(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Regression => f.write_str("regression"),
            Task::Classification => f.write_str("classification"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preprocessing {
    Raw,
    Centered,
    UnitNormalized,
}

/// Which CSV column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    /// Zero-based column index.
    Index(usize),
    Last,
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" => TargetColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => TargetColumn::Index(i),
                Err(_) => TargetColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: DMatrix<f64>,
    targets: DVector<f64>,
    preprocessing: Preprocessing,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(instances: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if instances.nrows() == 0 || instances.ncols() == 0 {
            return Err(Error::invalid("dataset needs at least one row and one column"));
        }
        if instances.nrows() != targets.len() {
            return Err(Error::LengthMismatch { left: instances.nrows(), right: targets.len() });
        }
        Ok(Dataset { instances, targets, preprocessing: Preprocessing::Raw, feature_names: None })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m() {
            return Err(Error::LengthMismatch { left: names.len(), right: self.m() });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Instance matrix, one row per instance.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.instances
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn n(&self) -> usize {
        self.instances.nrows()
    }

    pub fn m(&self) -> usize {
        self.instances.ncols()
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn is_binary(&self) -> bool {
        self.targets.iter().all(|&t| t == 0.0 || t == 1.0)
    }

    /// New dataset holding the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.instances.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.targets[i]));
        Dataset {
            instances: x,
            targets: y,
            preprocessing: self.preprocessing,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Load a comma-separated file. A first row that does not parse as numbers is
/// treated as a header.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target, task)
}

pub fn read_csv<R: Read>(reader: R, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::invalid("empty csv"));
    }

    let first = &records[0].1;
    let ncols = first.len();
    let positional = match target {
        TargetColumn::Last => Some(ncols - 1),
        TargetColumn::Index(i) => Some(*i),
        TargetColumn::Name(_) => None,
    };
    let looks_like_header = positional.is_none()
        || first.iter().enumerate().any(|(j, c)| Some(j) != positional && c.parse::<f64>().is_err());
    let header: Option<Vec<String>> = looks_like_header.then(|| first.iter().map(str::to_string).collect());
    let target_idx = match target {
        TargetColumn::Last => ncols - 1,
        TargetColumn::Index(i) if *i < ncols => *i,
        TargetColumn::Index(i) => return Err(Error::MissingTarget(i.to_string())),
        TargetColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::MissingTarget(name.clone()))?,
    };
    if ncols < 2 {
        return Err(Error::invalid("csv needs at least one feature column besides the target"));
    }

    let body = if header.is_some() { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(Error::invalid("csv has a header but no data rows"));
    }
    let m = ncols - 1;
    let mut values = Vec::with_capacity(body.len() * m);
    let mut raw_targets = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != ncols {
            return Err(Error::invalid(format!("row {line} has {} cells, expected {ncols}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == target_idx {
                raw_targets.push((*line, j, cell.to_string()));
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse { row: *line, col: j + 1, value: cell.to_string() })?;
            values.push(v);
        }
    }
    let targets = match task {
        Task::Regression => raw_targets
            .iter()
            .map(|(row, col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { row: *row, col: col + 1, value: cell.clone() })
            })
            .collect::<Result<Vec<_>>>()?,
        Task::Classification => binary_labels(raw_targets.iter().map(|(_, _, c)| c.as_str()))?,
    };

    let n = body.len();
    let x = DMatrix::from_row_slice(n, m, &values);
    let ds = Dataset::new(x, DVector::from_vec(targets))?;
    match header {
        Some(h) => {
            let names = h.into_iter().enumerate().filter(|(j, _)| *j != target_idx).map(|(_, s)| s).collect();
            ds.with_feature_names(names)
        }
        None => Ok(ds),
    }
}

/// Map two distinct labels onto {0, 1}: numeric labels by value, text labels
/// lexicographically.
fn binary_labels<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> Result<Vec<f64>> {
    let numeric: Option<Vec<f64>> = cells.clone().map(|c| c.parse::<f64>().ok()).collect();
    match numeric {
        Some(vals) => {
            let mut distinct = vals.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() > 2 {
                return Err(Error::NonBinaryLabel(distinct.len()));
            }
            let hi = *distinct.last().expect("non-empty");
            if distinct.len() == 1 {
                // Single class: keep 0/1 values as they are.
                return Ok(vals.iter().map(|&v| if v == 1.0 { 1.0 } else { 0.0 }).collect());
            }
            Ok(vals.iter().map(|&v| if v == hi { 1.0 } else { 0.0 }).collect())
        }
        None => {
            let mut distinct: Vec<&str> = cells.clone().collect();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() > 2 {
                return Err(Error::NonBinaryLabel(distinct.len()));
            }
            let hi = distinct[distinct.len() - 1];
            Ok(cells.map(|c| if c == hi && distinct.len() == 2 { 1.0 } else { 0.0 }).collect())
        }
    }
}

/// Write the dataset as CSV with a header row; values use the shortest
/// decimal form that parses back to the identical `f64`.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, file)
}

pub fn write_csv<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match ds.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..ds.m()).map(|j| format!("x{j}")).collect(),
    };
    header.push("target".into());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let row: Vec<String> =
            ds.x().row(i).iter().chain(std::iter::once(&ds.y()[i])).map(|v| format!("{v:?}")).collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Column means of the features and the target mean, fitted on one dataset
/// and applicable to another.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub feature_means: DVector<f64>,
    pub target_mean: f64,
}

impl Centering {
    pub fn fit(ds: &Dataset) -> Self {
        let feature_means = ds.x().row_mean().transpose();
        Centering { feature_means, target_mean: ds.y().mean() }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut x = ds.x().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.feature_means[j]);
        }
        let y = ds.y().add_scalar(-self.target_mean);
        Dataset {
            instances: x,
            targets: y,
            preprocessing: Preprocessing::Centered,
            feature_names: ds.feature_names.clone(),
        }
    }
}

fn unit_normalize(ds: &Dataset) -> Result<Dataset> {
    let mut x = ds.x().clone();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        row /= norm;
    }
    Ok(Dataset {
        instances: x,
        targets: ds.y().clone(),
        preprocessing: Preprocessing::UnitNormalized,
        feature_names: ds.feature_names.clone(),
    })
}

/// Center (regression) or unit-normalize rows (classification).
pub fn preprocess(ds: &Dataset, task: Task) -> Result<Dataset> {
    match task {
        Task::Regression => Ok(Centering::fit(ds).apply(ds)),
        Task::Classification => unit_normalize(ds),
    }
}

/// Preprocess a train/test pair with statistics taken from the training part.
pub fn preprocess_pair(train: &Dataset, test: &Dataset, task: Task) -> Result<(Dataset, Dataset)> {
    match task {
        Task::Regression => {
            let c = Centering::fit(train);
            Ok((c.apply(train), c.apply(test)))
        }
        Task::Classification => Ok((unit_normalize(train)?, unit_normalize(test)?)),
    }
}

/// Seeded random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Row indices of the two parts of a seeded random split.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let first = (n as f64 * fraction).round() as usize;
    if first == 0 || first >= n {
        return Err(Error::EmptySplit { n, fraction });
    }
    let mut perm = permutation(n, seed);
    let second = perm.split_off(first);
    Ok((perm, second))
}

pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(ds.n(), fraction, seed)?;
    Ok((ds.select_rows(&a), ds.select_rows(&b)))
}

/// Seeded uniform subsample holding `fraction` of the rows (at least one).
pub fn sample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("sample fraction {fraction} not in (0, 1]")));
    }
    let k = ((ds.n() as f64 * fraction).round() as usize).clamp(1, ds.n());
    let mut idx = permutation(ds.n(), seed);
    idx.truncate(k);
    Ok(ds.select_rows(&idx))
}

/// Two Gaussian classes in `dim` dimensions with means of all −1 (label 0)
/// and all +1 (label 1). Each class gets its own covariance `G Gᵀ / dim`
/// with `G` drawn entrywise from the standard normal.
pub fn synth_gaussian(n_per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 {
        return Err(Error::invalid("n_per_class and dim must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let mut x = DMatrix::zeros(n, dim);
    let mut y = DVector::zeros(n);
    let scale = 1.0 / (dim as f64).sqrt();
    for class in 0..2 {
        let mean = if class == 0 { -1.0 } else { 1.0 };
        let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng)) * scale;
        for r in 0..n_per_class {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let sample = &g * z;
            let i = class * n_per_class + r;
            for j in 0..dim {
                x[(i, j)] = mean + sample[j];
            }
            y[i] = class as f64;
        }
    }
    Dataset::new(x, y)
}

/// Linear regression data: standard normal features, `y = X w + noise` with
/// a standard normal `w`.
pub fn synth_regression(n: usize, m: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("n and m must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    let x = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let eps = DVector::from_fn(n, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        noise * e
    });
    let y = &x * w + eps;
    Dataset::new(x, y)
}

/// Linearly generated binary labels `1[xᵀw + noise > 0]` over standard normal
/// features.
pub fn synth_logistic(n: usize, m: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let reg = synth_regression(n, m, noise, seed)?;
    let y = reg.y().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    Dataset::new(reg.x().clone(), y)
}
