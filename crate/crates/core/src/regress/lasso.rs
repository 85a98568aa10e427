//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Objective: `(1/2n)·‖y − b₀ − Xβ‖² + λ·‖β‖₁` with an unpenalized
//! intercept `b₀`. Inputs are centered internally; on standardized data
//! the intercept is zero and the KKT conditions read directly off `X` and `y`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mse, r2_score, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Converged when no coefficient moves by this much in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-7,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub features: Vec<String>,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// In-sample R².
    pub r2: f64,
    /// Out-of-fold R² at the selected penalty (cross-validated fits only).
    pub r2_cv: Option<f64>,
    pub cv_table: Vec<CvPoint>,
    pub objective: f64,
    pub sweeps: usize,
    /// Objective after every sweep.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.beta);
        (x * beta).iter().map(|v| v + self.intercept).collect()
    }

    pub fn support(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct Centered {
    x: DMatrix<f64>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    /// `‖x_j‖² / n` of the centered columns
    col_sq: Vec<f64>,
}

fn center(d: &Dataset) -> Centered {
    let n = d.n() as f64;
    let mut x = d.x.clone();
    let mut x_mean = Vec::with_capacity(d.p());
    let mut col_sq = Vec::with_capacity(d.p());
    for j in 0..d.p() {
        let mut col = x.column_mut(j);
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        x_mean.push(m);
        col_sq.push(col.norm_squared() / n);
    }
    let y_mean = d.y.iter().sum::<f64>() / n;
    Centered {
        x,
        y: d.y.iter().map(|v| v - y_mean).collect(),
        x_mean,
        y_mean,
        col_sq,
    }
}

/// Smallest penalty at which every coefficient is zero: `max_j |x_jᵀ(y − ȳ)| / n`.
pub fn lambda_max(d: &Dataset) -> f64 {
    let c = center(d);
    let n = d.n() as f64;
    let y = DVector::from_column_slice(&c.y);
    (0..d.p()).map(|j| (c.x.column(j).dot(&y) / n).abs()).fold(0.0, f64::max)
}

/// `count` log-spaced penalties from `lambda_max` down to `lambda_max · ratio`.
pub fn default_grid(d: &Dataset, count: usize, ratio: f64) -> Vec<f64> {
    let top = lambda_max(d);
    if top == 0.0 || count == 0 {
        return vec![0.0];
    }
    if count == 1 {
        return vec![top];
    }
    let (hi, lo) = (top.ln(), (top * ratio).ln());
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn solve(c: &Centered, lambda: f64, opts: &LassoOptions, warm: Option<&[f64]>) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let n = c.y.len() as f64;
    let p = c.x.ncols();
    let mut beta = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut r = DVector::from_column_slice(&c.y) - &c.x * DVector::from_column_slice(&beta);
    let objective = |r: &DVector<f64>, beta: &[f64]| r.norm_squared() / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
    let mut trace = Vec::new();
    for sweep in 1..=opts.max_sweeps {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if c.col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = c.x.column(j);
            let rho = col.dot(&r) / n + c.col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / c.col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(&r, &beta));
        if max_delta < opts.tol {
            return Ok((beta, sweep, trace));
        }
    }
    Err(Error::LassoNotConverged {
        sweeps: opts.max_sweeps,
        objective: trace.last().copied().unwrap_or(f64::NAN),
    })
}

fn finish(d: &Dataset, c: &Centered, beta: Vec<f64>, lambda: f64, sweeps: usize, trace: Vec<f64>) -> LassoFit {
    let intercept = c.y_mean - c.x_mean.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
    let mut fit = LassoFit {
        features: d.features.clone(),
        intercept,
        beta,
        lambda,
        r2: f64::NAN,
        r2_cv: None,
        cv_table: Vec::new(),
        objective: trace.last().copied().unwrap_or(f64::NAN),
        sweeps,
        objective_trace: trace,
    };
    fit.r2 = r2_score(&d.y, &fit.predict(&d.x)).unwrap_or(f64::NAN);
    fit
}

pub fn lasso_fit(d: &Dataset, lambda: f64) -> Result<LassoFit> {
    lasso_fit_with(d, lambda, &LassoOptions::default(), None)
}

/// Fit at one penalty, optionally warm-started from `warm`.
pub fn lasso_fit_with(d: &Dataset, lambda: f64, opts: &LassoOptions, warm: Option<&[f64]>) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("penalty must be nonnegative, got {lambda}")));
    }
    let c = center(d);
    let (beta, sweeps, trace) = solve(&c, lambda, opts, warm)?;
    Ok(finish(d, &c, beta, lambda, sweeps, trace))
}

/// Coefficients along a decreasing penalty path with warm starts.
fn path(c: &Centered, grid: &[f64], opts: &LassoOptions) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (beta, _, _) = solve(c, lambda, opts, out.last().map(Vec::as_slice))?;
        out.push(beta);
    }
    Ok(out)
}

/// k-fold cross-validated penalty choice. Folds come from a seeded shuffle;
/// the penalty with the lowest mean test MSE wins, ties to the larger
/// penalty. `grid` defaults to 100 log-spaced values over four decades.
pub fn cv_select_lambda(d: &Dataset, folds: usize, grid: Option<&[f64]>, seed: u64) -> Result<LassoFit> {
    let n = d.n();
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!("folds = {folds} must lie in 2..={n}")));
    }
    let mut grid: Vec<f64> = grid.map(<[f64]>::to_vec).unwrap_or_else(|| default_grid(d, 100, 1e-4));
    grid.sort_by(|a, b| b.total_cmp(a));
    let opts = LassoOptions::default();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "cv_folds", 0));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    // per fold: (test indices, predictions per grid point)
    let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let train_d = d.subset(&train);
            let c = center(&train_d);
            let betas = path(&c, &grid, &opts)?;
            let test_d = d.subset(&test);
            let preds = betas
                .into_iter()
                .map(|beta| finish(&train_d, &c, beta, 0.0, 0, Vec::new()).predict(&test_d.x))
                .collect();
            Ok((test, preds))
        })
        .collect::<Result<_>>()?;

    let cv_table: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let fold_mse: Vec<f64> = per_fold
                .iter()
                .map(|(test, preds)| {
                    let y: Vec<f64> = test.iter().map(|&i| d.y[i]).collect();
                    mse(&y, &preds[g])
                })
                .collect();
            CvPoint {
                lambda,
                mean_mse: fold_mse.iter().sum::<f64>() / folds as f64,
            }
        })
        .collect();
    let mut best = 0;
    for (g, point) in cv_table.iter().enumerate() {
        if point.mean_mse < cv_table[best].mean_mse {
            best = g;
        }
    }

    let mut pooled = vec![0.0; n];
    for (test, preds) in &per_fold {
        for (k, &i) in test.iter().enumerate() {
            pooled[i] = preds[best][k];
        }
    }

    let c = center(d);
    let betas = path(&c, &grid[..=best], &opts)?;
    let beta = betas.into_iter().last().expect("non-empty path");
    // refit from the warm start to report sweeps and the objective trace
    let (beta, sweeps, trace) = solve(&c, grid[best], &opts, Some(&beta))?;
    let mut fit = finish(d, &c, beta, grid[best], sweeps, trace);
    fit.r2_cv = r2_score(&d.y, &pooled).ok();
    fit.cv_table = cv_table;
    Ok(fit)
}
