use super::{ClusterResult, DistanceMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PamOutcome {
    pub clusters: ClusterResult,
    /// Sum of distances from each item to its medoid.
    pub cost: f64,
    /// Total cost after BUILD and after every accepted swap.
    pub cost_trace: Vec<f64>,
}

/// Nearest and second-nearest medoid positions per item.
struct Assignment {
    nearest: Vec<usize>,
    nearest_d: Vec<f64>,
    second_d: Vec<f64>,
}

fn assign(d: &DistanceMatrix, medoids: &[usize]) -> Assignment {
    let n = d.len();
    let mut a = Assignment {
        nearest: vec![0; n],
        nearest_d: vec![f64::INFINITY; n],
        second_d: vec![f64::INFINITY; n],
    };
    for j in 0..n {
        for (m, &med) in medoids.iter().enumerate() {
            let dist = d.get(j, med);
            if dist < a.nearest_d[j] {
                a.second_d[j] = a.nearest_d[j];
                a.nearest_d[j] = dist;
                a.nearest[j] = m;
            } else if dist < a.second_d[j] {
                a.second_d[j] = dist;
            }
        }
    }
    a
}

/// Partitioning Around Medoids: greedy BUILD seeding followed by SWAP
/// iterations that take the single best cost-reducing medoid/non-medoid
/// exchange until none improves. Deterministic; ties go to lower indices.
pub fn pam(d: &DistanceMatrix, k: usize) -> Result<PamOutcome> {
    let n = d.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }

    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let first = (0..n)
        .map(|i| (d.row(i).iter().sum::<f64>(), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
        .expect("n >= 1");
    medoids.push(first);
    let mut current: Vec<f64> = d.row(first).to_vec();
    while medoids.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let gain: f64 = (0..n).map(|j| (current[j] - d.get(j, c)).max(0.0)).sum();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, c));
            }
        }
        let (_, c) = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        for (j, cur) in current.iter_mut().enumerate() {
            *cur = cur.min(d.get(j, c));
        }
    }

    // SWAP
    let mut cost: f64 = current.iter().sum();
    let mut trace = vec![cost];
    loop {
        let a = assign(d, &medoids);
        let mut best: Option<(f64, usize, usize)> = None;
        for m in 0..k {
            for o in (0..n).filter(|o| !medoids.contains(o)) {
                let mut new_cost = 0.0;
                for j in 0..n {
                    let to_o = d.get(j, o);
                    new_cost += if a.nearest[j] == m {
                        to_o.min(a.second_d[j])
                    } else {
                        to_o.min(a.nearest_d[j])
                    };
                }
                if best.is_none_or(|(c, _, _)| new_cost < c) {
                    best = Some((new_cost, m, o));
                }
            }
        }
        match best {
            Some((new_cost, m, o)) if cost - new_cost > 1e-12 * cost.abs() && new_cost < cost => {
                medoids[m] = o;
                cost = new_cost;
                trace.push(cost);
            }
            _ => break,
        }
    }

    medoids.sort_unstable();
    let assignment = (0..n)
        .map(|j| {
            if let Some(c) = medoids.iter().position(|&m| m == j) {
                return Some(c);
            }
            let mut best = 0;
            for c in 1..k {
                if d.get(j, medoids[c]) < d.get(j, medoids[best]) {
                    best = c;
                }
            }
            Some(best)
        })
        .collect();
    let cost = (0..n).map(|j| medoids.iter().map(|&m| d.get(j, m)).fold(f64::INFINITY, f64::min)).sum();
    Ok(PamOutcome {
        clusters: ClusterResult {
            assignment,
            medoids,
            k,
        },
        cost,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples() -> DistanceMatrix {
        DistanceMatrix::euclidean(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
            vec![10.0, 10.1],
        ])
    }

    #[test]
    fn k_equals_n_costs_nothing() {
        let out = pam(&triples(), 6).unwrap();
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.clusters.medoids, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn one_medoid_minimizes_total_distance() {
        let d = DistanceMatrix::euclidean(&[vec![0.0], vec![1.0], vec![2.0], vec![7.0]]);
        let out = pam(&d, 1).unwrap();
        assert_eq!(out.clusters.medoids, vec![1]);
        assert_eq!(out.cost, 1.0 + 1.0 + 6.0);
    }

    #[test]
    fn two_triples() {
        let out = pam(&triples(), 2).unwrap();
        assert_eq!(out.clusters.assignment, vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);
        assert!(out.cost_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn k_out_of_range() {
        assert!(pam(&triples(), 7).is_err());
        assert!(pam(&triples(), 0).is_err());
    }
}
