//! Chained-equations imputation with normal linear regressions.
//!
//! Missing cells start at their column means. Each cycle visits the columns
//! that have missing cells, in ascending order of missing fraction, regresses
//! the observed cells of that column on the current values of every other
//! column, and redraws the missing cells as prediction plus Gaussian noise
//! scaled by the residual standard deviation. Observed cells are never
//! touched.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng;

pub const DEFAULT_CYCLES: usize = 10;
pub const RIDGE_FALLBACK: f64 = 1e-6;

const FIT_STREAM: u64 = 0x1A;
const APPLY_STREAM: u64 = 0x1B;

/// Row-major matrix whose cells may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<Option<f64>>,
}

impl IncompleteMatrix {
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            cells.extend_from_slice(r);
        }
        if let Some(v) = cells.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observed cell {v}")));
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            cells,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            cells: m.as_slice().iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.cells[r * self.n_cols + c]
    }

    pub fn set_missing(&mut self, r: usize, c: usize) {
        self.cells[r * self.n_cols + c] = None;
    }

    pub fn missing_count(&self, c: usize) -> usize {
        (0..self.n_rows).filter(|&r| self.get(r, c).is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRegression {
    pub intercept: f64,
    /// One coefficient per column; the target's own entry is zero.
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
    /// Set when the design was rank deficient and the ridge fallback was used.
    pub ridge: bool,
}

impl ColumnRegression {
    fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    pub cycles: usize,
    pub seed: u64,
    /// Draw missing cells with residual noise; when false the regression
    /// prediction is used directly.
    pub add_noise: bool,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            cycles: DEFAULT_CYCLES,
            seed: 0,
            add_noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub column_means: Vec<f64>,
    /// Final regression per column. Columns complete in the fitting data get
    /// a regression fitted once on the completed matrix, so the model can
    /// still fill them when they are missing elsewhere.
    pub regressions: Vec<ColumnRegression>,
    pub visit_order: Vec<usize>,
    pub cycles: usize,
    pub seed: u64,
    pub add_noise: bool,
    /// Median absolute change of the imputed cells in each cycle.
    pub cycle_changes: Vec<f64>,
}

impl ImputationModel {
    pub fn n_cols(&self) -> usize {
        self.column_means.len()
    }

    pub fn save_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Least squares of `target` on all other columns over `rows`, with
/// standardized predictors. Falls back to ridge when the Gram matrix is
/// numerically singular.
fn fit_regression(work: &DenseMatrix, target: usize, rows: &[usize]) -> ColumnRegression {
    let p = work.cols();
    let preds: Vec<usize> = (0..p).filter(|&c| c != target).collect();
    let m = rows.len() as f64;
    let y_mean = rows.iter().map(|&r| work.get(r, target)).sum::<f64>() / m;
    let mut x_mean = vec![0.0; preds.len()];
    for &r in rows {
        for (k, &c) in preds.iter().enumerate() {
            x_mean[k] += work.get(r, c);
        }
    }
    x_mean.iter_mut().for_each(|v| *v /= m);
    let mut x_sd = vec![0.0; preds.len()];
    for &r in rows {
        for (k, &c) in preds.iter().enumerate() {
            x_sd[k] += (work.get(r, c) - x_mean[k]).powi(2);
        }
    }
    x_sd.iter_mut().for_each(|v| *v = (*v / m).sqrt());

    let q = preds.len();
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    let mut z = vec![0.0; q];
    for &r in rows {
        let row = work.row(r);
        for (k, &c) in preds.iter().enumerate() {
            z[k] = if x_sd[k] > 0.0 {
                (row[c] - x_mean[k]) / x_sd[k]
            } else {
                0.0
            };
        }
        let yc = row[target] - y_mean;
        for a in 0..q {
            rhs[a] += z[a] * yc;
            for b in a..q {
                gram[(a, b)] += z[a] * z[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let solve = |g: &DMatrix<f64>| -> Option<DVector<f64>> {
        let chol = g.clone().cholesky()?;
        let l = chol.l();
        let diag: Vec<f64> = (0..q).map(|i| l[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if q > 0 && min * min < 1e-12 * max * max {
            return None;
        }
        Some(chol.solve(&rhs))
    };
    let (beta_z, ridge) = match if q == 0 { Some(DVector::zeros(0)) } else { solve(&gram) } {
        Some(b) => (b, false),
        None => {
            let mut g = gram.clone();
            for i in 0..q {
                g[(i, i)] += RIDGE_FALLBACK * m;
            }
            let b = g
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .unwrap_or_else(|| DVector::zeros(q));
            (b, true)
        }
    };

    let mut coefficients = vec![0.0; p];
    let mut intercept = y_mean;
    for (k, &c) in preds.iter().enumerate() {
        if x_sd[k] > 0.0 {
            let b = beta_z[k] / x_sd[k];
            coefficients[c] = b;
            intercept -= b * x_mean[k];
        }
    }
    let reg = ColumnRegression {
        intercept,
        coefficients,
        residual_sd: 0.0,
        ridge,
    };
    let rss: f64 = rows
        .iter()
        .map(|&r| (work.get(r, target) - reg.predict(work.row(r))).powi(2))
        .sum();
    let dof = (rows.len() as f64 - (q + 1) as f64).max(1.0);
    ColumnRegression {
        residual_sd: (rss / dof).sqrt(),
        ..reg
    }
}

/// Fill every missing cell of `matrix` and return the completed matrix with
/// the fitted model.
pub fn impute_fit_transform(
    matrix: &IncompleteMatrix,
    config: &ImputeConfig,
) -> Result<(DenseMatrix, ImputationModel)> {
    if config.cycles == 0 {
        return Err(Error::Config("imputation needs at least one cycle".into()));
    }
    let (n, p) = (matrix.n_rows, matrix.n_cols);
    let mut means = vec![0.0; p];
    let mut missing_rows: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut observed_rows: Vec<Vec<usize>> = vec![Vec::new(); p];
    for c in 0..p {
        let mut sum = 0.0;
        for r in 0..n {
            match matrix.get(r, c) {
                Some(v) => {
                    sum += v;
                    observed_rows[c].push(r);
                }
                None => missing_rows[c].push(r),
            }
        }
        if observed_rows[c].is_empty() {
            return Err(Error::invalid(format!("column {c} has no observed values")));
        }
        if observed_rows[c].len() < 2 {
            return Err(Error::invalid(format!("column {c} needs at least two observed values")));
        }
        means[c] = sum / observed_rows[c].len() as f64;
    }

    let mut work = DenseMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            work.set(r, c, matrix.get(r, c).unwrap_or(means[c]));
        }
    }

    let mut visit_order: Vec<usize> = (0..p).filter(|&c| !missing_rows[c].is_empty()).collect();
    visit_order.sort_by_key(|&c| missing_rows[c].len());

    let mut regressions: Vec<Option<ColumnRegression>> = vec![None; p];
    let mut rng = rng::stream(config.seed, FIT_STREAM);
    let mut cycle_changes = Vec::with_capacity(config.cycles);
    for _ in 0..config.cycles {
        let mut changes = Vec::new();
        for &c in &visit_order {
            let reg = fit_regression(&work, c, &observed_rows[c]);
            for &r in &missing_rows[c] {
                let mut v = reg.predict(work.row(r));
                if config.add_noise {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v += reg.residual_sd * e;
                }
                changes.push((v - work.get(r, c)).abs());
                work.set(r, c, v);
            }
            regressions[c] = Some(reg);
        }
        cycle_changes.push(median(&mut changes));
    }
    let regressions = regressions
        .into_iter()
        .enumerate()
        .map(|(c, reg)| reg.unwrap_or_else(|| fit_regression(&work, c, &observed_rows[c])))
        .collect();
    let model = ImputationModel {
        column_means: means,
        regressions,
        visit_order,
        cycles: config.cycles,
        seed: config.seed,
        add_noise: config.add_noise,
        cycle_changes,
    };
    Ok((work, model))
}

/// Fill `matrix` with a fitted model in one chained pass: training means
/// first, then each column with missing cells in the model's visit order
/// (columns never missing during fitting follow by index).
pub fn apply_imputation(model: &ImputationModel, matrix: &IncompleteMatrix) -> Result<DenseMatrix> {
    if matrix.n_cols != model.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: model.n_cols(),
            found: matrix.n_cols,
        });
    }
    let (n, p) = (matrix.n_rows, matrix.n_cols);
    let mut work = DenseMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            work.set(r, c, matrix.get(r, c).unwrap_or(model.column_means[c]));
        }
    }
    let mut order = model.visit_order.clone();
    order.extend((0..p).filter(|c| !model.visit_order.contains(c)));
    let mut rng = rng::stream(model.seed, APPLY_STREAM);
    for c in order {
        let reg = &model.regressions[c];
        for r in 0..n {
            if matrix.get(r, c).is_some() {
                continue;
            }
            let mut v = reg.predict(work.row(r));
            if model.add_noise {
                let e: f64 = StandardNormal.sample(&mut rng);
                v += reg.residual_sd * e;
            }
            work.set(r, c, v);
        }
    }
    Ok(work)
}

/// Average of `m` independently seeded completed matrices.
pub fn impute_pooled(matrix: &IncompleteMatrix, config: &ImputeConfig, m: usize) -> Result<DenseMatrix> {
    if m == 0 {
        return Err(Error::Config("need at least one imputation".into()));
    }
    let mut acc = DenseMatrix::zeros(matrix.n_rows, matrix.n_cols);
    for k in 0..m {
        let cfg = ImputeConfig {
            seed: rng::derive_seed(config.seed, k as u64),
            ..config.clone()
        };
        let (done, _) = impute_fit_transform(matrix, &cfg)?;
        for r in 0..matrix.n_rows {
            for c in 0..matrix.n_cols {
                acc.set(r, c, acc.get(r, c) + done.get(r, c) / m as f64);
            }
        }
    }
    Ok(acc)
}
