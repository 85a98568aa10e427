use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pam, ClusterResult, DistanceMatrix};
use crate::error::{Error, Result};
use crate::numeric::{mean, median};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    /// Width per item; 0 for noise and singleton-cluster members.
    pub widths: Vec<f64>,
    /// Mean and median over clustered (non-noise) items.
    pub mean: f64,
    pub median: f64,
}

/// Silhouette widths `(b − a) / max(a, b)`, with `a` the mean distance to
/// the item's co-members and `b` the smallest mean distance to another
/// cluster.
pub fn silhouette(result: &ClusterResult, d: &DistanceMatrix) -> Silhouette {
    let n = result.assignment.len();
    let members = result.members();
    let nonempty = members.iter().filter(|m| !m.is_empty()).count();
    let mut widths = vec![0.0; n];
    if nonempty < 2 {
        log::warn!("silhouette needs at least two clusters; all widths set to 0");
    } else {
        widths = (0..n)
            .into_par_iter()
            .map(|i| {
                let Some(own) = result.assignment[i] else { return 0.0 };
                if members[own].len() < 2 {
                    return 0.0;
                }
                let a = members[own].iter().filter(|&&j| j != i).map(|&j| d.get(i, j)).sum::<f64>()
                    / (members[own].len() - 1) as f64;
                let b = members
                    .iter()
                    .enumerate()
                    .filter(|(c, m)| *c != own && !m.is_empty())
                    .map(|(_, m)| m.iter().map(|&j| d.get(i, j)).sum::<f64>() / m.len() as f64)
                    .fold(f64::INFINITY, f64::min);
                let denom = a.max(b);
                if denom > 0.0 {
                    (b - a) / denom
                } else {
                    0.0
                }
            })
            .collect();
    }
    let clustered: Vec<f64> = (0..n).filter(|&i| result.assignment[i].is_some()).map(|i| widths[i]).collect();
    Silhouette {
        mean: mean(&clustered),
        median: median(&clustered).unwrap_or(0.0),
        widths,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub cost: f64,
    pub mean_silhouette: f64,
    pub median_silhouette: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub clusters: ClusterResult,
    pub silhouette: Silhouette,
    pub table: Vec<KScore>,
}

/// Run PAM for every `k` in `k_min..=k_max` (clamped to `1..=n`) and keep
/// the solution with the largest mean silhouette, then largest median,
/// then smallest `k`.
pub fn select_k(d: &DistanceMatrix, k_min: usize, k_max: usize) -> Result<KSelection> {
    let n = d.len();
    if n == 0 {
        return Err(Error::invalid("no items to cluster"));
    }
    if k_max > n {
        log::warn!("k_max {k_max} exceeds {n} items; clamped");
    }
    let hi = k_max.min(n).max(1);
    let lo = k_min.clamp(1, hi);
    let runs: Vec<(ClusterResult, Silhouette, KScore)> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let out = pam(d, k)?;
            let s = silhouette(&out.clusters, d);
            let score = KScore {
                k,
                cost: out.cost,
                mean_silhouette: s.mean,
                median_silhouette: s.median,
            };
            Ok((out.clusters, s, score))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, (_, _, s)) in runs.iter().enumerate().skip(1) {
        let b = &runs[best].2;
        let better = s.mean_silhouette > b.mean_silhouette
            || (s.mean_silhouette == b.mean_silhouette && s.median_silhouette > b.median_silhouette);
        if better {
            best = i;
        }
    }
    let table = runs.iter().map(|r| r.2.clone()).collect();
    let (clusters, silhouette, score) = runs.into_iter().nth(best).expect("non-empty range");
    Ok(KSelection {
        k: score.k,
        clusters,
        silhouette,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> (DistanceMatrix, ClusterResult) {
        // {0,1} and {2,3}: intra-distance 1, inter-distance 10
        let d = DistanceMatrix::from_fn(4, |i, j| if i / 2 == j / 2 { 1.0 } else { 10.0 });
        (d, ClusterResult::from_assignment(vec![Some(0), Some(0), Some(1), Some(1)]))
    }

    #[test]
    fn two_pairs() {
        let (d, r) = pairs();
        let s = silhouette(&r, &d);
        for w in &s.widths {
            assert!((w - 0.9).abs() < 1e-15);
        }
        assert!((s.mean - 0.9).abs() < 1e-15);
    }

    #[test]
    fn boundary_point_scores_zero() {
        let d = DistanceMatrix::from_fn(3, |_, _| 1.0);
        let r = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(1)]);
        let s = silhouette(&r, &d);
        assert_eq!(s.widths, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn singleton_and_single_cluster() {
        let (d, _) = pairs();
        let r = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(0), Some(1)]);
        assert_eq!(silhouette(&r, &d).widths[3], 0.0);
        let one = ClusterResult::from_assignment(vec![Some(0); 4]);
        assert_eq!(silhouette(&one, &d).widths, vec![0.0; 4]);
    }

    #[test]
    fn select_k_with_only_one_choice() {
        let d = DistanceMatrix::euclidean(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]);
        let sel = select_k(&d, 4, 30).unwrap();
        assert_eq!(sel.k, 4);
        assert_eq!(sel.table.len(), 1);
    }

    #[test]
    fn select_k_finds_pairs() {
        let (d, _) = pairs();
        let sel = select_k(&d, 2, 3).unwrap();
        assert_eq!(sel.k, 2);
        assert_eq!(sel.table.len(), 2);
    }
}
