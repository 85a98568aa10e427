//! Density clustering of tags, medoid clustering of pages, and silhouette
//! based model selection.

mod optics;
mod pam;
mod silhouette;

pub use optics::{
    eps_cut_rules, extract_clusters, optics, EpsCutRule, FixedCut, KneeCut, OpticsParams, OrderedItem,
    ReachabilityOrdering,
};
pub use pam::{pam, PamOutcome};
pub use silhouette::{select_k, silhouette, KScore, KSelection, Silhouette};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

/// Dense symmetric dissimilarity table.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a pairwise function evaluated once per unordered pair.
    /// The diagonal is zero.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let upper: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| ((i + 1)..n).map(|j| f(i, j)).collect()).collect();
        let mut data = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn euclidean(points: &[Vec<f64>]) -> Self {
        Self::from_fn(points.len(), |i, j| {
            points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Sub-table over the given items, in the given order.
    pub fn subset(&self, items: &[usize]) -> DistanceMatrix {
        Self::from_fn(items.len(), |a, b| self.get(items[a], items[b]))
    }
}

/// Cluster membership per item; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub assignment: Vec<Option<usize>>,
    /// Medoid item per cluster (medoid clustering only).
    pub medoids: Vec<usize>,
    pub k: usize,
}

impl ClusterResult {
    pub fn from_assignment(assignment: Vec<Option<usize>>) -> Self {
        let k = assignment.iter().flatten().map(|c| c + 1).max().unwrap_or(0);
        ClusterResult {
            assignment,
            medoids: Vec::new(),
            k,
        }
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, c) in self.assignment.iter().enumerate() {
            if let Some(c) = c {
                m[*c].push(i);
            }
        }
        m
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i].is_none()).collect()
    }

    /// Fraction of item pairs on which two partitions agree about being in
    /// the same group (Rand index). Noise items form their own group.
    pub fn pair_agreement(&self, labels: &[usize]) -> f64 {
        let n = self.assignment.len().min(labels.len());
        let (mut agree, mut total) = (0u64, 0u64);
        for i in 0..n {
            for j in (i + 1)..n {
                let same_a = self.assignment[i].is_some() && self.assignment[i] == self.assignment[j];
                let same_b = labels[i] == labels[j];
                agree += u64::from(same_a == same_b);
                total += 1;
            }
        }
        if total == 0 {
            1.0
        } else {
            agree as f64 / total as f64
        }
    }
}

/// `1 − s`: maps a similarity in [−1, 1] to a distance in [0, 2].
pub fn similarity_to_distance(s: f64) -> f64 {
    1.0 - s
}

fn pearson_r(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `1 − r` between the rows of `m`, with `r` the Pearson correlation over
/// all columns. Constant rows get `r = 0`.
pub fn book_dissimilarity(m: &SparseMatrix) -> Result<DistanceMatrix> {
    if m.n_cols() < 2 {
        return Err(Error::invalid("row correlation needs at least 2 columns"));
    }
    let rows: Vec<Vec<f64>> = (0..m.n_rows()).map(|i| m.dense_row(i)).collect();
    let constant = rows.iter().filter(|r| r.iter().all(|v| *v == r[0])).count();
    if constant > 0 {
        log::warn!("{constant} constant rows; their correlations are set to 0");
    }
    Ok(DistanceMatrix::from_fn(rows.len(), |i, j| 1.0 - pearson_r(&rows[i], &rows[j]).unwrap_or(0.0)))
}

/// Read an override file of `item,cluster_label` rows.
pub fn read_overrides(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && rec.iter().eq(["item", "cluster_label"]) {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                reason: "expected `item,cluster_label`".into(),
            });
        }
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

/// Reassign items named in `overrides` to the cluster carrying the given
/// label (appending new clusters for unseen labels). The label `NOISE`
/// marks an item as noise. Clusters left empty are removed.
pub fn apply_overrides(
    result: &ClusterResult,
    labels: &[String],
    items: &[String],
    overrides: &BTreeMap<String, String>,
) -> (ClusterResult, Vec<String>) {
    let mut labels = labels.to_vec();
    let mut assignment = result.assignment.clone();
    let item_index: HashMap<&str, usize> = items.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    for (item, label) in overrides {
        let Some(&i) = item_index.get(item.as_str()) else {
            log::warn!("override for unknown item `{item}` ignored");
            continue;
        };
        assignment[i] = if label == "NOISE" {
            None
        } else {
            match labels.iter().position(|l| l == label) {
                Some(c) => Some(c),
                None => {
                    labels.push(label.clone());
                    Some(labels.len() - 1)
                }
            }
        };
    }
    // compact away empty clusters
    let mut used = vec![false; labels.len()];
    for c in assignment.iter().flatten() {
        used[*c] = true;
    }
    let mut remap = vec![None; labels.len()];
    let mut kept = Vec::new();
    for (c, label) in labels.into_iter().enumerate() {
        if used[c] {
            remap[c] = Some(kept.len());
            kept.push(label);
        }
    }
    let assignment = assignment.into_iter().map(|a| a.and_then(|c| remap[c])).collect();
    let mut out = ClusterResult::from_assignment(assignment);
    out.k = kept.len();
    (out, kept)
}

/// Write `item,cluster_label` rows; noise items get the label `NOISE`.
pub fn write_assignment(path: &Path, result: &ClusterResult, items: &[String], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item", "cluster_label"])?;
    for (item, c) in items.iter().zip(&result.assignment) {
        let label = c.map(|c| labels[c].as_str()).unwrap_or("NOISE");
        w.write_record([item.as_str(), label])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read `item,cluster_label` rows as written by [`write_assignment`].
/// Cluster ids follow the first appearance of each label.
pub fn read_assignment(path: &Path) -> Result<(Vec<String>, ClusterResult, Vec<String>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut items = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut assignment = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                reason: "expected `item,cluster_label`".into(),
            });
        }
        items.push(rec[0].to_string());
        let label = &rec[1];
        assignment.push(if label == "NOISE" {
            None
        } else {
            Some(labels.iter().position(|l| l == label).unwrap_or_else(|| {
                labels.push(label.to_string());
                labels.len() - 1
            }))
        });
    }
    let mut result = ClusterResult::from_assignment(assignment);
    result.k = labels.len();
    Ok((items, result, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn distance_conversion() {
        assert_eq!(similarity_to_distance(1.0), 0.0);
        assert_eq!(similarity_to_distance(0.0), 1.0);
        assert_eq!(similarity_to_distance(-1.0), 2.0);
    }

    fn rows(r: &[&[f64]]) -> SparseMatrix {
        let d = DMatrix::from_fn(r.len(), r[0].len(), |i, j| r[i][j]);
        let l = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        SparseMatrix::from_dense("t", l(r.len()), l(r[0].len()), &d).unwrap()
    }

    #[test]
    fn book_dissimilarity_examples() {
        let d = book_dissimilarity(&rows(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], &[1.0, 2.0, 4.0], &[2.0, 2.0, 2.0]])).unwrap();
        assert!(d.get(0, 1).abs() < 1e-15);
        assert!((d.get(0, 2) - 2.0).abs() < 1e-15);
        // r = 3 / sqrt(2 * 14/3) = 0.98198...
        let r = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        assert!((d.get(0, 3) - (1.0 - r)).abs() < 1e-12);
        assert!((d.get(0, 3) - 0.0180).abs() < 1e-4);
        assert_eq!(d.get(0, 4), 1.0);
        assert!(book_dissimilarity(&rows(&[&[1.0], &[2.0]])).is_err());
    }

    #[test]
    fn overrides_move_items() {
        let r = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(1), None]);
        let labels = vec!["a".to_string(), "b".to_string()];
        let items: Vec<String> = ["t0", "t1", "t2", "t3"].iter().map(|s| s.to_string()).collect();
        let mut ov = BTreeMap::new();
        ov.insert("t2".to_string(), "a".to_string());
        ov.insert("t3".to_string(), "fresh".to_string());
        ov.insert("t0".to_string(), "NOISE".to_string());
        let (out, labels) = apply_overrides(&r, &labels, &items, &ov);
        assert_eq!(labels, vec!["a".to_string(), "fresh".to_string()]);
        assert_eq!(out.assignment, vec![None, Some(0), Some(0), Some(1)]);
        assert_eq!(out.k, 2);
    }

    #[test]
    fn rand_index() {
        let r = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(r.pair_agreement(&[5, 5, 7, 7]), 1.0);
        assert!((r.pair_agreement(&[5, 7, 5, 7]) - 2.0 / 6.0).abs() < 1e-15);
    }
}
