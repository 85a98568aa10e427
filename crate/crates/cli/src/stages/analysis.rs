use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tagprof_core::corpus::{read_page_traits, Factor, FactorScores};
use tagprof_core::matrix::SparseMatrix;
use tagprof_core::registry::Named;
use tagprof_core::regress::{
    cv_select_lambda, default_grid, forest_fit_with, importance_methods, standardize, tune_mtry, Dataset,
    ForestParams,
};
use tagprof_core::stats::{correlation_table, disposition_correlation, write_correlations};

use super::data::read_corpus;
use super::tags::read_page_features;
use super::{write_json, Stage, StageContext};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

fn read_traits(ctx: &StageContext) -> Result<BTreeMap<String, FactorScores>> {
    Ok(read_page_traits(&ctx.input("ingest", "page_traits.csv"))?)
}

/// Pages with both features and trait scores: dense features, one response
/// column per factor.
fn scored_pages(features: &SparseMatrix, traits: &BTreeMap<String, FactorScores>) -> (DMatrix<f64>, Vec<FactorScores>) {
    let rows: Vec<usize> = (0..features.n_rows())
        .filter(|&i| traits.contains_key(&features.row_labels()[i]))
        .collect();
    let x = DMatrix::from_fn(rows.len(), features.n_cols(), |r, c| features.get(rows[r], c));
    let y = rows.iter().map(|&i| traits[&features.row_labels()[i]]).collect();
    (x, y)
}

fn dataset(x: &DMatrix<f64>, y: &[FactorScores], f: Factor, features: &SparseMatrix) -> Result<Dataset> {
    Ok(Dataset::new(
        x.clone(),
        y.iter().map(|s| s.get(f)).collect(),
        features.col_labels().to_vec(),
    )?)
}

/// Pearson correlation of every cluster feature with every trait.
pub struct Correlate;

impl Named for Correlate {
    fn name(&self) -> &'static str {
        "correlate"
    }
}

impl Stage for Correlate {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["consolidate", "ingest"]
    }

    fn params(&self, _cfg: &PipelineConfig) -> Value {
        Value::Null
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let entries = correlation_table(&read_page_features(ctx)?, &read_traits(ctx)?)?;
        write_correlations(&ctx.output("correlations.csv"), &entries)?;
        Ok(vec!["correlations.csv".into()])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoSummary {
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub n: usize,
    pub lambda: f64,
    pub r2: f64,
    pub r2_cv: Option<f64>,
    pub intercept: f64,
    /// Coefficients on standardized features, by feature label.
    pub coefficients: BTreeMap<String, f64>,
}

/// Cross-validated lasso per trait.
pub struct Lasso;

impl Named for Lasso {
    fn name(&self) -> &'static str {
        "lasso"
    }
}

impl Stage for Lasso {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["consolidate", "ingest"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "lasso": cfg.lasso })
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let features = read_page_features(ctx)?;
        let (x, y) = scored_pages(&features, &read_traits(ctx)?);
        let cfg = &ctx.cfg.lasso;
        if x.nrows() < cfg.folds {
            return Err(CliError::Config(format!(
                "lasso needs at least {} scored pages, found {}",
                cfg.folds,
                x.nrows()
            )));
        }
        let mut out = Vec::new();
        let mut w = csv::Writer::from_path(ctx.output("lasso.csv"))?;
        w.write_record(["trait", "feature", "coefficient"])?;
        for (k, f) in Factor::ALL.into_iter().enumerate() {
            let (d, _) = standardize(&dataset(&x, &y, f, &features)?);
            let grid = default_grid(&d, cfg.grid_size, cfg.grid_ratio);
            let fit = cv_select_lambda(&d, cfg.folds, Some(&grid), ctx.seed(k as u64))?;
            for (feature, b) in fit.features.iter().zip(&fit.beta) {
                w.write_record([f.name(), feature.as_str(), &b.to_string()])?;
            }
            out.push(LassoSummary {
                trait_name: f.name().to_string(),
                n: d.n(),
                lambda: fit.lambda,
                r2: fit.r2,
                r2_cv: fit.r2_cv,
                intercept: fit.intercept,
                coefficients: fit.features.iter().cloned().zip(fit.beta.iter().copied()).collect(),
            });
        }
        w.flush().map_err(|e| CliError::io(&ctx.output("lasso.csv"), e))?;
        write_json(&ctx.output("lasso.json"), &out)?;
        Ok(vec!["lasso.csv".into(), "lasso.json".into()])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestSummary {
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub n: usize,
    pub params: ForestParams,
    pub r2: f64,
    pub oob_r2: Option<f64>,
    pub oob_mse: Option<f64>,
    pub importance_method: String,
    pub importance: BTreeMap<String, f64>,
    /// Cross-validated MSE per candidate `mtry`, when tuned.
    pub mtry_table: Vec<(usize, f64)>,
}

/// Random forest per trait with feature importances.
pub struct Forest;

impl Named for Forest {
    fn name(&self) -> &'static str {
        "forest"
    }
}

impl Stage for Forest {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["consolidate", "ingest"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "forest": cfg.forest })
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let features = read_page_features(ctx)?;
        let (x, y) = scored_pages(&features, &read_traits(ctx)?);
        let cfg = &ctx.cfg.forest;
        let methods = importance_methods();
        let method = methods.get(&cfg.importance).ok_or_else(|| {
            CliError::Config(format!(
                "unknown importance method `{}`; known: {}",
                cfg.importance,
                methods.names().join(", ")
            ))
        })?;
        let p = features.n_cols();
        let mut out = Vec::new();
        let mut w = csv::Writer::from_path(ctx.output("importance.csv"))?;
        w.write_record(["trait", "feature", "importance"])?;
        for (k, f) in Factor::ALL.into_iter().enumerate() {
            let d = dataset(&x, &y, f, &features)?;
            let mut params = ForestParams {
                n_trees: cfg.n_trees,
                mtry: cfg.mtry.unwrap_or((p / 3).max(1)).clamp(1, p),
                min_leaf: cfg.min_leaf,
                seed: ctx.seed(k as u64),
            };
            let mut mtry_table = Vec::new();
            if cfg.tune_mtry {
                let mut candidates = vec![1, (p / 3).max(1), (p / 2).max(1), p];
                candidates.sort_unstable();
                candidates.dedup();
                let (best, table) = tune_mtry(&d, &candidates, cfg.tune_folds, &params)?;
                params.mtry = best;
                mtry_table = table;
            }
            let fit = forest_fit_with(&d, &params, method)?;
            for (feature, v) in fit.features.iter().zip(&fit.importance) {
                w.write_record([f.name(), feature.as_str(), &v.to_string()])?;
            }
            out.push(ForestSummary {
                trait_name: f.name().to_string(),
                n: d.n(),
                params,
                r2: fit.r2,
                oob_r2: fit.oob_r2,
                oob_mse: fit.oob_mse,
                importance_method: method.name().to_string(),
                importance: fit.features.iter().cloned().zip(fit.importance.iter().copied()).collect(),
                mtry_table,
            });
        }
        w.flush().map_err(|e| CliError::io(&ctx.output("importance.csv"), e))?;
        write_json(&ctx.output("forest.json"), &out)?;
        Ok(vec!["importance.csv".into(), "forest.json".into()])
    }
}

/// Correlation of each trait with how many pages a user likes.
pub struct Disposition;

impl Named for Disposition {
    fn name(&self) -> &'static str {
        "disposition"
    }
}

impl Stage for Disposition {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["ingest"]
    }

    fn params(&self, _cfg: &PipelineConfig) -> Value {
        Value::Null
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let corpus = read_corpus(ctx)?;
        let entries = disposition_correlation(&corpus.users)?;
        write_correlations(&ctx.output("disposition.csv"), &entries)?;
        Ok(vec!["disposition.csv".into()])
    }
}
