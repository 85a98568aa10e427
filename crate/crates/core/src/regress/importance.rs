use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::forest::{fit_trees, ForestFit, ForestParams};
use super::{mse, Dataset};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::rng;

/// Per-feature importance of a fitted forest, in units of MSE increase.
pub trait ImportanceMethod: Named + Send + Sync {
    fn importance(&self, fit: &ForestFit, d: &Dataset, seed: u64) -> Result<Vec<f64>>;
}

/// Shuffle one column at a time and measure the MSE increase, averaged
/// over `repeats` permutations.
pub struct PermutationImportance;

pub const PERMUTATION_REPEATS: usize = 5;

impl Named for PermutationImportance {
    fn name(&self) -> &'static str {
        "permutation"
    }
}

impl ImportanceMethod for PermutationImportance {
    fn importance(&self, fit: &ForestFit, d: &Dataset, seed: u64) -> Result<Vec<f64>> {
        check_schema(fit, d)?;
        let base = mse(&d.y, &fit.predict(&d.x));
        let used = fit.used_features();
        Ok((0..d.p())
            .into_par_iter()
            .map(|j| {
                if !used[j] {
                    return 0.0;
                }
                let mut total = 0.0;
                for rep in 0..PERMUTATION_REPEATS {
                    let mut col: Vec<f64> = d.x.column(j).iter().copied().collect();
                    col.shuffle(&mut rng::stream(seed, "permute", (j * PERMUTATION_REPEATS + rep) as u64));
                    let mut x = d.x.clone();
                    x.column_mut(j).copy_from_slice(&col);
                    total += mse(&d.y, &fit.predict(&x)) - base;
                }
                total / PERMUTATION_REPEATS as f64
            })
            .collect())
    }
}

/// Refit without each feature and measure the out-of-bag MSE increase.
/// Slow: one extra forest per feature.
pub struct DropColumnImportance;

impl Named for DropColumnImportance {
    fn name(&self) -> &'static str {
        "drop-column"
    }
}

impl ImportanceMethod for DropColumnImportance {
    fn importance(&self, fit: &ForestFit, d: &Dataset, _seed: u64) -> Result<Vec<f64>> {
        check_schema(fit, d)?;
        let Some(base) = fit.oob_mse else {
            return Err(Error::invalid("drop-column importance needs out-of-bag predictions"));
        };
        if d.p() < 2 {
            return Err(Error::invalid("drop-column importance needs at least two features"));
        }
        (0..d.p())
            .map(|j| {
                let reduced = d.without_feature(j);
                let params = ForestParams {
                    mtry: fit.params.mtry.min(reduced.p()),
                    ..fit.params
                };
                let refit = fit_trees(&reduced, &params)?;
                Ok(refit.oob_mse.unwrap_or(base) - base)
            })
            .collect()
    }
}

fn check_schema(fit: &ForestFit, d: &Dataset) -> Result<()> {
    if fit.features != d.features {
        return Err(Error::invalid("dataset features differ from the fitted forest"));
    }
    Ok(())
}

pub fn permutation_importance(fit: &ForestFit, d: &Dataset, seed: u64) -> Result<Vec<f64>> {
    PermutationImportance.importance(fit, d, seed)
}

pub fn importance_methods() -> Registry<dyn ImportanceMethod> {
    let mut r: Registry<dyn ImportanceMethod> = Registry::new();
    r.register(Box::new(PermutationImportance));
    r.register(Box::new(DropColumnImportance));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn data(seed: u64) -> Dataset {
        let mut r = rng::stream(seed, "imp", 0);
        let x = DMatrix::from_fn(150, 3, |_, _| StandardNormal.sample(&mut r));
        let y = (0..150).map(|i| 2.0 * x[(i, 0)]).collect();
        Dataset::new(x, y, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    fn params() -> ForestParams {
        ForestParams {
            n_trees: 40,
            mtry: 3,
            min_leaf: 5,
            seed: 9,
        }
    }

    #[test]
    fn signal_feature_dominates() {
        let d = data(1);
        let fit = fit_trees(&d, &params()).unwrap();
        let imp = permutation_importance(&fit, &d, 4).unwrap();
        assert!(imp[0] > 1.0);
        assert!(imp[0] > 10.0 * imp[1].abs().max(imp[2].abs()));
    }

    #[test]
    fn unused_feature_scores_exactly_zero() {
        let mut d = data(2);
        d.x.column_mut(2).fill(1.0);
        let fit = fit_trees(&d, &params()).unwrap();
        assert!(!fit.used_features()[2]);
        assert_eq!(permutation_importance(&fit, &d, 4).unwrap()[2], 0.0);
    }

    #[test]
    fn drop_column_ranks_signal_first() {
        let d = data(3);
        let fit = fit_trees(&d, &params()).unwrap();
        let imp = DropColumnImportance.importance(&fit, &d, 0).unwrap();
        assert!(imp[0] > imp[1] && imp[0] > imp[2]);
    }

    #[test]
    fn registry_names() {
        assert_eq!(importance_methods().names(), vec!["drop-column", "permutation"]);
    }
}
