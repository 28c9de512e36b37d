//! Datasets, response standardization, splitting plans and synthetic data.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

/// Affine map between the raw response and the standardized response:
/// `raw = standardized * sd + mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub const IDENTITY: Standardization = Standardization { mean: 0.0, sd: 1.0 };

    pub fn to_raw<T: Real>(&self, standardized: T) -> T {
        standardized * T::lit(self.sd) + T::lit(self.mean)
    }

    pub fn to_standardized<T: Real>(&self, raw: T) -> T {
        (raw - T::lit(self.mean)) / T::lit(self.sd)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    /// Response, length `n`.
    pub y: Array1<T>,
    /// Covariates, `n x p`; row `i` is `x_i`.
    pub x: Array2<T>,
    /// Covariate column labels, if known.
    pub names: Option<Vec<String>>,
    pub response_name: Option<String>,
    /// `None` when `y` is on the raw scale.
    pub standardization: Option<Standardization>,
}

impl<T: Real> Dataset<T> {
    pub fn new(y: Array1<T>, x: Array2<T>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::invalid("dataset must have at least one row"));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset {
            y,
            x,
            names: None,
            response_name: None,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Map back to the raw response scale.
    pub fn scale(&self) -> Standardization {
        self.standardization.unwrap_or(Standardization::IDENTITY)
    }

    pub fn raw_y(&self) -> Array1<T> {
        let s = self.scale();
        self.y.mapv(|v| s.to_raw(v))
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            y: self.y.select(Axis(0), indices),
            x: self.x.select(Axis(0), indices),
            names: self.names.clone(),
            response_name: self.response_name.clone(),
            standardization: self.standardization,
        }
    }
}

/// Reads a UTF-8 comma-separated file with a header row. The named column
/// becomes the response and the remaining columns, in file order, the
/// covariates. Rows are reported 1-based, counting data rows only.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, response_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let response_idx = header
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::MissingColumn(response_column.to_owned()))?;

    let p = header.len() - 1;
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseCell {
                    row,
                    column: header[c].clone(),
                    value: cell.to_owned(),
                })?;
            if c == response_idx {
                y.push(T::lit(value));
            } else {
                x.push(T::lit(value));
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Csv(format!("{} has no data rows", path.display())));
    }
    let x = Array2::from_shape_vec((n, p), x).expect("row lengths checked");
    let mut d = Dataset::new(Array1::from(y), x)?;
    d.names = Some(
        header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != response_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    );
    d.response_name = Some(response_column.to_owned());
    Ok(d)
}

fn mean_sd<T: Real>(v: &Array1<T>) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().map(|x| x.as_f64()).sum::<f64>() / n;
    let var = v.iter().map(|x| (x.as_f64() - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Centers the response and scales it to unit sample standard deviation.
/// The recorded map always points back to the raw scale, even if `d` was
/// already standardized.
pub fn standardize_response<T: Real>(d: &Dataset<T>) -> Result<Dataset<T>> {
    if d.n() < 2 {
        return Err(Error::invalid("standardization needs at least two observations"));
    }
    let (mean, sd) = mean_sd(&d.y);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let prior = d.scale();
    let step = Standardization { mean, sd };
    let mut out = d.clone();
    out.y = d.y.mapv(|v| step.to_standardized(v));
    out.standardization = Some(Standardization {
        mean: prior.mean + prior.sd * mean,
        sd: prior.sd * sd,
    });
    Ok(out)
}

/// Optional per-column covariate scaling, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateScaling {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl CovariateScaling {
    /// Constant columns keep unit scale.
    pub fn fit<T: Real>(x: &Array2<T>) -> Self {
        let (means, sds) = x
            .axis_iter(Axis(1))
            .map(|col| {
                let (m, s) = if col.len() > 1 {
                    mean_sd(&col.to_owned())
                } else {
                    (col[0].as_f64(), 0.0)
                };
                (m, if s > 0.0 { s } else { 1.0 })
            })
            .unzip();
        CovariateScaling { means, sds }
    }

    pub fn apply<T: Real>(&self, x: &Array2<T>) -> Array2<T> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (T::lit(self.means[j]), T::lit(self.sds[j]));
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub fold_id: Option<usize>,
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    idx
}

/// Uniformly random train/test split, deterministic given `seed`. Index lists
/// are returned sorted.
pub fn train_test_split(n: usize, test_size: usize, seed: u64) -> Result<SplitPlan> {
    if test_size == 0 || test_size >= n {
        return Err(Error::invalid(format!(
            "test size {test_size} must be in 1..{n} for n = {n}"
        )));
    }
    let perm = permutation(n, seed);
    let mut test_indices = perm[..test_size].to_vec();
    let mut train_indices = perm[test_size..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(SplitPlan {
        train_indices,
        test_indices,
        seed,
        fold_id: None,
    })
}

/// `k` folds whose test sets partition `0..n`, sizes differing by at most one.
pub fn kfold_plan(n: usize, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("fold count {k} must be in 2..={n}")));
    }
    let perm = permutation(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    let mut plans = Vec::with_capacity(k);
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let mut test_indices = perm[start..start + size].to_vec();
        let mut train_indices: Vec<usize> = perm[..start]
            .iter()
            .chain(&perm[start + size..])
            .copied()
            .collect();
        test_indices.sort_unstable();
        train_indices.sort_unstable();
        plans.push(SplitPlan {
            train_indices,
            test_indices,
            seed,
            fold_id: Some(fold),
        });
        start += size;
    }
    Ok(plans)
}

/// Standard-normal covariates with a smooth nonlinear response in the first
/// (up to) three covariates plus Gaussian noise. The response is raw (not
/// standardized).
pub fn make_synthetic<T: Real>(n: usize, p: usize, noise_sd: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 || p < 1 || !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::invalid(format!(
            "synthetic data needs n >= 2, p >= 1, noise_sd >= 0 (got {n}, {p}, {noise_sd})"
        )));
    }
    let mut rng = rng::stream(seed, 1);
    let x = Array2::from_shape_fn((n, p), |_| T::sample_standard_normal(&mut rng));
    let y = x
        .axis_iter(Axis(0))
        .map(|row| {
            let mut f = row[0].as_f64().sin();
            if p > 1 {
                f += 0.5 * (1.5 * row[1].as_f64()).cos();
            }
            if p > 2 {
                f += 0.25 * row[0].as_f64() * row[2].as_f64();
            }
            T::lit(f) + T::lit(noise_sd) * T::sample_standard_normal(&mut rng)
        })
        .collect::<Array1<T>>();
    let mut d = Dataset::new(y, x)?;
    d.names = Some((1..=p).map(|j| format!("x{j}")).collect());
    d.response_name = Some("y".into());
    Ok(d)
}

/// Writes `d` as CSV with the response first (raw scale).
pub fn write_csv<T: Real>(d: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let names = d
        .names
        .clone()
        .unwrap_or_else(|| (1..=d.p()).map(|j| format!("x{j}")).collect());
    let mut header = vec![d.response_name.clone().unwrap_or_else(|| "y".into())];
    header.extend(names);
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    let raw = d.raw_y();
    for i in 0..d.n() {
        let mut rec = vec![format!("{}", raw[i].as_f64())];
        rec.extend(d.x.row(i).iter().map(|v| format!("{}", v.as_f64())));
        w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
