//! Random-forest regression: bootstrap-aggregated variance-reduction trees
//! with per-node random feature subsets.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::importance::PermutationImportance;
use super::{mse, r2_score, Dataset, ImportanceMethod};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn at each node.
    pub mtry: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl ForestParams {
    /// 500 trees, leaves of at least 5, and `mtry = max(1, p / 3)`.
    pub fn for_features(p: usize, seed: u64) -> Self {
        ForestParams {
            n_trees: 500,
            mtry: (p / 3).max(1),
            min_leaf: 5,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64, samples: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[(row, *feature)] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub fn leaf_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { samples, .. } => Some(*samples),
            Node::Split { .. } => None,
        })
    }

    fn grow(d: &Dataset, samples: Vec<usize>, params: &ForestParams, rng: &mut impl Rng) -> RegressionTree {
        let mut nodes = vec![Node::Leaf { value: 0.0, samples: 0 }];
        let mut stack = vec![(0usize, samples)];
        while let Some((slot, idx)) = stack.pop() {
            match best_split(d, &idx, params, rng) {
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| d.x[(i, feature)] <= threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0, samples: 0 });
                    nodes.push(Node::Leaf { value: 0.0, samples: 0 });
                    nodes[slot] = Node::Split { feature, threshold, left, right };
                    stack.push((right, r));
                    stack.push((left, l));
                }
                None => {
                    let value = idx.iter().map(|&i| d.y[i]).sum::<f64>() / idx.len() as f64;
                    nodes[slot] = Node::Leaf {
                        value,
                        samples: idx.len(),
                    };
                }
            }
        }
        RegressionTree { nodes }
    }
}

/// Best variance-reducing split over `mtry` random features, keeping at
/// least `min_leaf` samples on each side.
fn best_split(d: &Dataset, idx: &[usize], params: &ForestParams, rng: &mut impl Rng) -> Option<(usize, f64)> {
    let m = idx.len();
    let min_leaf = params.min_leaf.max(1);
    if m < 2 * min_leaf {
        return None;
    }
    let total: f64 = idx.iter().map(|&i| d.y[i]).sum();
    let first = d.y[idx[0]];
    if idx.iter().all(|&i| d.y[i] == first) {
        return None;
    }
    let base = total * total / m as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
    for feature in sample(rng, d.p(), params.mtry.min(d.p())).into_iter() {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (d.x[(i, feature)], d.y[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 1..m {
            left_sum += pairs[k - 1].1;
            if k < min_leaf || m - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64 - base;
            if gain > 1e-12 * base.abs().max(1e-300) && best.is_none_or(|(g, _, _)| gain > g) {
                let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub features: Vec<String>,
    #[serde(skip)]
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    /// Increase in MSE per feature under the configured importance method.
    pub importance: Vec<f64>,
    /// In-sample R².
    pub r2: f64,
    pub oob_mse: Option<f64>,
    pub oob_r2: Option<f64>,
}

impl ForestFit {
    /// Mean prediction over trees; trees are summed in index order per row.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let t = self.trees.len() as f64;
        (0..x.nrows())
            .into_par_iter()
            .map(|row| self.trees.iter().map(|tree| tree.predict_row(x, row)).sum::<f64>() / t)
            .collect()
    }

    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.features.len()];
        for t in &self.trees {
            for f in t.split_features() {
                used[f] = true;
            }
        }
        used
    }
}

struct GrownTree {
    tree: RegressionTree,
    oob: Vec<(usize, f64)>,
}

fn grow_forest(d: &Dataset, params: &ForestParams) -> Vec<GrownTree> {
    let n = d.n();
    (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(params.seed, "forest_tree", t as u64);
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = (0..n)
                .map(|_| {
                    let i = r.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            let tree = RegressionTree::grow(d, samples, params, &mut r);
            let oob = (0..n).filter(|&i| !in_bag[i]).map(|i| (i, tree.predict_row(&d.x, i))).collect();
            GrownTree { tree, oob }
        })
        .collect()
}

/// Fit without computing importances.
pub(crate) fn fit_trees(d: &Dataset, params: &ForestParams) -> Result<ForestFit> {
    if params.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    if params.mtry == 0 || params.mtry > d.p() {
        return Err(Error::invalid(format!("mtry = {} must lie in 1..={}", params.mtry, d.p())));
    }
    let grown = grow_forest(d, params);
    let n = d.n();
    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for g in &grown {
        for &(i, p) in &g.oob {
            oob_sum[i] += p;
            oob_count[i] += 1;
        }
    }
    let covered: Vec<usize> = (0..n).filter(|&i| oob_count[i] > 0).collect();
    let (oob_mse, oob_r2) = if covered.len() >= 2 {
        let y: Vec<f64> = covered.iter().map(|&i| d.y[i]).collect();
        let p: Vec<f64> = covered.iter().map(|&i| oob_sum[i] / oob_count[i] as f64).collect();
        (Some(mse(&y, &p)), r2_score(&y, &p).ok())
    } else {
        (None, None)
    };
    let mut fit = ForestFit {
        features: d.features.clone(),
        trees: grown.into_iter().map(|g| g.tree).collect(),
        params: *params,
        importance: vec![0.0; d.p()],
        r2: f64::NAN,
        oob_mse,
        oob_r2,
    };
    fit.r2 = r2_score(&d.y, &fit.predict(&d.x)).unwrap_or(f64::NAN);
    Ok(fit)
}

/// Grow the forest and score feature importance by permutation on `d`.
pub fn forest_fit(d: &Dataset, params: &ForestParams) -> Result<ForestFit> {
    forest_fit_with(d, params, &PermutationImportance)
}

pub fn forest_fit_with(d: &Dataset, params: &ForestParams, importance: &dyn ImportanceMethod) -> Result<ForestFit> {
    let mut fit = fit_trees(d, params)?;
    fit.importance = importance.importance(&fit, d, rng::derive_seed(params.seed, "importance", 0))?;
    Ok(fit)
}

/// k-fold cross-validated MSE for each candidate `mtry`; returns the table
/// and the candidate with the lowest error (ties to the smaller `mtry`).
pub fn tune_mtry(d: &Dataset, candidates: &[usize], folds: usize, params: &ForestParams) -> Result<(usize, Vec<(usize, f64)>)> {
    let n = d.n();
    if folds < 2 || folds > n || candidates.is_empty() {
        return Err(Error::invalid("need candidates and 2..=n folds"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng::stream(params.seed, "mtry_folds", 0));
    let mut table = Vec::new();
    for &mtry in candidates {
        let p = ForestParams { mtry, ..*params };
        let mut sse = 0.0;
        for f in 0..folds {
            let test: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds == f).map(|(_, &i)| i).collect();
            let train: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds != f).map(|(_, &i)| i).collect();
            let fit = fit_trees(&d.subset(&train), &p)?;
            let test_d = d.subset(&test);
            sse += mse(&test_d.y, &fit.predict(&test_d.x)) * test.len() as f64;
        }
        table.push((mtry, sse / n as f64));
    }
    let best = table
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|e| e.0)
        .expect("non-empty");
    Ok((best, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    fn small(n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            mtry: 1,
            min_leaf: 5,
            seed: 3,
        }
    }

    #[test]
    fn constant_response() {
        let x = DMatrix::from_fn(40, 2, |i, j| (i * (j + 1)) as f64);
        let d = Dataset::new(x, vec![2.5; 40], labels(2)).unwrap();
        let fit = forest_fit(&d, &ForestParams { mtry: 2, ..small(20) }).unwrap();
        assert!(fit.predict(&d.x).iter().all(|p| *p == 2.5));
        assert_eq!(fit.importance, vec![0.0, 0.0]);
    }

    #[test]
    fn step_function_fits() {
        let mut r = rng::stream(1, "step", 0);
        let x = DMatrix::from_fn(200, 1, |_, _| StandardNormal.sample(&mut r));
        let y = (0..200).map(|i| if x[(i, 0)] > 0.0 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::new(x, y, labels(1)).unwrap();
        let fit = forest_fit(&d, &small(50)).unwrap();
        assert!(fit.r2 > 0.95, "r2 {}", fit.r2);
        assert!(fit.importance[0] > 0.0);
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let mut r = rng::stream(2, "leaf", 0);
        let x = DMatrix::from_fn(120, 3, |_, _| StandardNormal.sample(&mut r));
        let y = (0..120).map(|i| x[(i, 0)] + x[(i, 1)] * x[(i, 2)]).collect();
        let d = Dataset::new(x, y, labels(3)).unwrap();
        let fit = fit_trees(&d, &ForestParams { mtry: 2, ..small(10) }).unwrap();
        assert!(fit.trees.iter().flat_map(|t| t.leaf_sizes()).all(|s| s >= 5));
    }

    #[test]
    fn bad_mtry_rejected() {
        let d = Dataset::new(DMatrix::zeros(10, 2), vec![0.0; 10], labels(2)).unwrap();
        assert!(fit_trees(&d, &ForestParams { mtry: 3, ..small(1) }).is_err());
        assert!(fit_trees(&d, &ForestParams { mtry: 0, ..small(1) }).is_err());
    }

    #[test]
    fn mtry_tuning_prefers_informative_draws() {
        let mut r = rng::stream(4, "tune", 0);
        let x = DMatrix::from_fn(150, 6, |_, _| StandardNormal.sample(&mut r));
        let y = (0..150).map(|i| 3.0 * x[(i, 0)]).collect();
        let d = Dataset::new(x, y, labels(6)).unwrap();
        let (best, table) = tune_mtry(&d, &[1, 6], 3, &small(30)).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(best, 6);
    }
}
