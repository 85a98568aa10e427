//! Trait prediction from tag-cluster features.

mod forest;
mod importance;
mod lasso;

pub use forest::{forest_fit, forest_fit_with, tune_mtry, ForestFit, ForestParams, RegressionTree};
pub use importance::{importance_methods, permutation_importance, PERMUTATION_REPEATS, DropColumnImportance, ImportanceMethod, PermutationImportance};
pub use lasso::{cv_select_lambda, default_grid, lambda_max, lasso_fit, lasso_fit_with, CvPoint, LassoFit, LassoOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix (rows are samples) with a response and feature labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub features: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, features: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!("{} rows but {} responses", x.nrows(), y.len())));
        }
        if x.ncols() != features.len() {
            return Err(Error::invalid("one label per feature column required"));
        }
        if y.len() < 2 {
            return Err(Error::invalid("at least two samples required"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("missing or non-finite values"));
        }
        Ok(Dataset { x, y, features })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx` (in that order).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: DMatrix::from_fn(idx.len(), self.p(), |r, c| self.x[(idx[r], c)]),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            features: self.features.clone(),
        }
    }

    pub fn without_feature(&self, j: usize) -> Dataset {
        let mut features = self.features.clone();
        features.remove(j);
        Dataset {
            x: self.x.clone().remove_column(j),
            y: self.y.clone(),
            features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Zero-variance columns (scaled by 1, so they become all zero).
    pub constant: Vec<bool>,
    pub y_mean: f64,
}

/// Center every feature to mean 0 and scale to population sd 1; center `y`.
pub fn standardize(d: &Dataset) -> (Dataset, Standardized) {
    let n = d.n() as f64;
    let mut x = d.x.clone();
    let mut means = Vec::with_capacity(d.p());
    let mut scales = Vec::with_capacity(d.p());
    let mut constant = Vec::with_capacity(d.p());
    for j in 0..d.p() {
        let mut col = x.column_mut(j);
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / n).sqrt();
        let flat = sd <= 1e-12 * (1.0 + m.abs());
        let scale = if flat { 1.0 } else { sd };
        if flat {
            col.fill(0.0);
        } else {
            col.scale_mut(1.0 / scale);
        }
        means.push(m);
        scales.push(scale);
        constant.push(flat);
    }
    let y_mean = d.y.iter().sum::<f64>() / n;
    let data = Dataset {
        x,
        y: d.y.iter().map(|v| v - y_mean).collect(),
        features: d.features.clone(),
    };
    let info = Standardized {
        means,
        scales,
        constant,
        y_mean,
    };
    (data, info)
}

/// `1 − SS_res / SS_tot`.
pub fn r2_score(y: &[f64], predictions: &[f64]) -> Result<f64> {
    if y.len() != predictions.len() || y.len() < 2 {
        return Err(Error::invalid("r2 needs two equal-length series of at least 2 values"));
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::NoVariance);
    }
    let ss_res: f64 = y.iter().zip(predictions).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub(crate) fn mse(y: &[f64], predictions: &[f64]) -> f64 {
    y.iter().zip(predictions).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}
