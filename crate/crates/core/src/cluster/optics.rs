use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClusterResult, DistanceMatrix};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    /// Neighbourhood size for a core point, counting the point itself.
    pub min_pts: usize,
    pub max_eps: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        OpticsParams {
            min_pts: 5,
            max_eps: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedItem {
    pub item: usize,
    /// `None` when undefined (first item of each connected run).
    pub reachability: Option<f64>,
    pub core_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityOrdering {
    pub min_pts: usize,
    pub entries: Vec<OrderedItem>,
}

impl ReachabilityOrdering {
    /// Defined reachability values in processing order.
    pub fn defined_reachabilities(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.reachability).collect()
    }

    /// Write `item,reachability` rows in processing order; undefined values
    /// are written as `inf`.
    pub fn write(&self, path: &Path, labels: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["item", "reachability"])?;
        for e in &self.entries {
            let r = e.reachability.map(|r| r.to_string()).unwrap_or_else(|| "inf".into());
            w.write_record([labels[e.item].as_str(), &r])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn core_distance(d: &DistanceMatrix, p: usize, params: &OpticsParams) -> Option<f64> {
    if params.min_pts == 0 || d.len() < params.min_pts {
        return None;
    }
    let mut row = d.row(p).to_vec();
    row.sort_by(|a, b| a.total_cmp(b));
    let cd = row[params.min_pts - 1];
    (cd <= params.max_eps).then_some(cd)
}

/// Cluster ordering over a distance table. The next item expanded is always
/// the unprocessed seed with the smallest reachability, ties to the smaller
/// index; new runs start at the smallest unprocessed index.
pub fn optics(d: &DistanceMatrix, params: &OpticsParams) -> ReachabilityOrdering {
    let n = d.len();
    let core: Vec<Option<f64>> = (0..n).map(|p| core_distance(d, p, params)).collect();
    let mut processed = vec![false; n];
    let mut reach: Vec<Option<f64>> = vec![None; n];
    let mut entries = Vec::with_capacity(n);

    for start in 0..n {
        if processed[start] {
            continue;
        }
        let mut current = start;
        loop {
            processed[current] = true;
            entries.push(OrderedItem {
                item: current,
                reachability: reach[current],
                core_distance: core[current],
            });
            if let Some(cd) = core[current] {
                for o in 0..n {
                    let dist = d.get(current, o);
                    if processed[o] || dist > params.max_eps {
                        continue;
                    }
                    let candidate = cd.max(dist);
                    if reach[o].is_none_or(|r| candidate < r) {
                        reach[o] = Some(candidate);
                    }
                }
            }
            let next = (0..n)
                .filter(|&o| !processed[o])
                .filter_map(|o| reach[o].map(|r| (r, o)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match next {
                Some((_, o)) => current = o,
                None => break,
            }
        }
    }
    ReachabilityOrdering {
        min_pts: params.min_pts,
        entries,
    }
}

/// Horizontal cut of the reachability profile at `eps_cut`. An item whose
/// reachability exceeds the cut (or is undefined) opens a new cluster if
/// it is core at `eps_cut`, otherwise it is noise; later items with
/// reachability within the cut join the open cluster. Clusters with fewer
/// than `min_pts` members become noise.
pub fn extract_clusters(ord: &ReachabilityOrdering, eps_cut: f64) -> ClusterResult {
    let n = ord.entries.len();
    let mut raw: Vec<Option<usize>> = vec![None; n];
    let mut open: Option<usize> = None;
    let mut next_id = 0;
    for e in &ord.entries {
        let within = e.reachability.is_some_and(|r| r <= eps_cut);
        if within {
            raw[e.item] = open;
        } else if e.core_distance.is_some_and(|c| c <= eps_cut) {
            open = Some(next_id);
            next_id += 1;
            raw[e.item] = open;
        } else {
            open = None;
        }
    }
    let mut sizes = vec![0usize; next_id];
    for c in raw.iter().flatten() {
        sizes[*c] += 1;
    }
    let mut remap = vec![None; next_id];
    let mut k = 0;
    // number clusters in order of first appearance in the ordering
    for e in &ord.entries {
        if let Some(c) = raw[e.item] {
            if sizes[c] >= ord.min_pts.max(1) && remap[c].is_none() {
                remap[c] = Some(k);
                k += 1;
            }
        }
    }
    let assignment = raw.into_iter().map(|c| c.and_then(|c| remap[c])).collect();
    ClusterResult {
        assignment,
        medoids: Vec::new(),
        k,
    }
}

/// Strategy for choosing the horizontal cut of a reachability profile.
pub trait EpsCutRule: Named + Send + Sync {
    /// `value` is the user-supplied cut, if any.
    fn choose(&self, ord: &ReachabilityOrdering, value: Option<f64>) -> Result<f64>;
}

/// Use the configured value as is.
pub struct FixedCut;

impl Named for FixedCut {
    fn name(&self) -> &'static str {
        "fixed"
    }
}

impl EpsCutRule for FixedCut {
    fn choose(&self, _ord: &ReachabilityOrdering, value: Option<f64>) -> Result<f64> {
        match value {
            Some(v) if v > 0.0 => Ok(v),
            Some(v) => Err(Error::invalid(format!("eps cut must be positive, got {v}"))),
            None => Err(Error::invalid("fixed eps cut requires a value")),
        }
    }
}

/// Knee of the sorted reachability profile: the value with the largest
/// second difference. Falls back to the largest reachability when the
/// profile has no convex bend.
pub struct KneeCut;

impl Named for KneeCut {
    fn name(&self) -> &'static str {
        "knee"
    }
}

impl EpsCutRule for KneeCut {
    fn choose(&self, ord: &ReachabilityOrdering, _value: Option<f64>) -> Result<f64> {
        let mut r = ord.defined_reachabilities();
        r.sort_by(|a, b| a.total_cmp(b));
        let fallback = r.last().copied().filter(|v| *v > 0.0).unwrap_or(f64::MAX);
        if r.len() < 3 {
            return Ok(fallback);
        }
        let mut best: Option<(f64, usize)> = None;
        for i in 1..r.len() - 1 {
            let second = r[i + 1] - 2.0 * r[i] + r[i - 1];
            if second > 0.0 && best.is_none_or(|(b, _)| second > b) {
                best = Some((second, i));
            }
        }
        Ok(match best {
            Some((_, i)) if r[i] > 0.0 => r[i],
            Some(_) => f64::MIN_POSITIVE,
            None => fallback,
        })
    }
}

pub fn eps_cut_rules() -> Registry<dyn EpsCutRule> {
    let mut r: Registry<dyn EpsCutRule> = Registry::new();
    r.register(Box::new(FixedCut));
    r.register(Box::new(KneeCut));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn line(points: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_fn(points.len(), |i, j| (points[i] - points[j]).abs())
    }

    #[test]
    fn too_few_points_have_no_core() {
        let ord = optics(&line(&[0.0, 1.0, 2.0]), &OpticsParams::default());
        assert!(ord.entries.iter().all(|e| e.reachability.is_none() && e.core_distance.is_none()));
        let c = extract_clusters(&ord, 10.0);
        assert_eq!(c.k, 0);
        assert_eq!(c.noise().len(), 3);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let ord = optics(&line(&[4.0; 8]), &OpticsParams::default());
        assert!(ord.entries.iter().all(|e| e.core_distance == Some(0.0)));
        assert_eq!(ord.entries[0].reachability, None);
        let c = extract_clusters(&ord, 0.5);
        assert_eq!(c.k, 1);
        assert!(c.noise().is_empty());
    }

    #[test]
    fn ordering_visits_one_blob_before_the_other() {
        let mut r = rng::stream(5, "blobs", 0);
        let noise = Normal::new(0.0, 0.1).unwrap();
        // blob diameter ~0.6, centers 6 apart; interleave indices
        let pts: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.0 } else { 6.0 } + noise.sample(&mut r)).collect();
        let ord = optics(&line(&pts), &OpticsParams::default());
        assert_eq!(ord.entries.len(), 40);
        assert_eq!(ord.entries[0].reachability, None);
        let side: Vec<bool> = ord.entries.iter().map(|e| e.item % 2 == 0).collect();
        let switches = side.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 1);

        let c = extract_clusters(&ord, 1.0);
        assert_eq!(c.k, 2);
        assert_eq!(c.pair_agreement(&(0..40).map(|i| i % 2).collect::<Vec<_>>()), 1.0);

        let all = extract_clusters(&ord, 100.0);
        assert_eq!(all.k, 1);
        assert!(all.noise().is_empty());
    }

    #[test]
    fn knee_cut_lands_between_scales() {
        let mut r = rng::stream(6, "blobs", 0);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pts: Vec<f64> = (0..60).map(|i| (i % 3) as f64 * 10.0 + noise.sample(&mut r)).collect();
        let ord = optics(&line(&pts), &OpticsParams::default());
        let cut = KneeCut.choose(&ord, None).unwrap();
        assert!(cut > 0.0 && cut < 5.0, "cut {cut}");
        assert_eq!(extract_clusters(&ord, cut).k, 3);
    }

    #[test]
    fn fixed_cut_requires_positive_value() {
        let ord = optics(&line(&[0.0; 6]), &OpticsParams::default());
        assert!(FixedCut.choose(&ord, None).is_err());
        assert!(FixedCut.choose(&ord, Some(0.0)).is_err());
        assert_eq!(FixedCut.choose(&ord, Some(0.3)).unwrap(), 0.3);
        assert_eq!(eps_cut_rules().names(), vec!["fixed", "knee"]);
    }
}
