use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterResult;
use crate::corpus::{Factor, FactorScores};
use crate::error::{Error, Result};
use crate::lowrank::truncated_svd;
use crate::matrix::SparseMatrix;
use crate::numeric::{mean, median, population_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreProfile {
    pub genre: String,
    /// Scored pages contributing to the medians.
    pub n_pages: usize,
    pub medians: FactorScores,
    /// Medians standardized per trait across genres (population sd).
    pub normalized: FactorScores,
}

/// Median trait scores per genre, then per-trait standardization across
/// genres. `items[i]` is the page id of assignment slot `i`; genre labels
/// are `genre<c>`. Genres with no scored page are dropped.
pub fn genre_profiles(
    genres: &ClusterResult,
    items: &[String],
    traits: &BTreeMap<String, FactorScores>,
) -> Result<Vec<GenreProfile>> {
    if items.len() != genres.assignment.len() {
        return Err(Error::invalid("one item label per assignment slot required"));
    }
    let mut profiles = Vec::new();
    for (c, members) in genres.members().iter().enumerate() {
        let scored: Vec<&FactorScores> = members.iter().filter_map(|&i| traits.get(&items[i])).collect();
        if scored.is_empty() {
            log::warn!("genre {c} has no scored pages; dropped");
            continue;
        }
        let mut med = [0.0; 5];
        for f in Factor::ALL {
            let v: Vec<f64> = scored.iter().map(|s| s.get(f)).collect();
            med[f.index()] = median(&v).expect("non-empty");
        }
        profiles.push(GenreProfile {
            genre: format!("genre{c}"),
            n_pages: scored.len(),
            medians: FactorScores(med),
            normalized: FactorScores([0.0; 5]),
        });
    }
    if profiles.len() < 2 {
        return Err(Error::invalid(format!(
            "normalization needs at least 2 scored genres, got {}",
            profiles.len()
        )));
    }
    for f in Factor::ALL {
        let v: Vec<f64> = profiles.iter().map(|p| p.medians.get(f)).collect();
        let (m, sd) = (mean(&v), population_sd(&v));
        if sd == 0.0 {
            log::warn!("all genres share the same {f} median; normalized to 0");
        }
        for (p, x) in profiles.iter_mut().zip(&v) {
            p.normalized.0[f.index()] = if sd > 0.0 { (x - m) / sd } else { 0.0 };
        }
    }
    Ok(profiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub genres: Vec<String>,
    /// Genre coordinates on the two leading components (genres × 2).
    pub coordinates: Vec<[f64; 2]>,
    /// Trait loadings (5 × 2), rows in factor order.
    pub loadings: Vec<[f64; 2]>,
    /// Share of total variance per component.
    pub explained: [f64; 2],
}

/// Principal components of the centered genre × trait normalized matrix.
pub fn project_profiles_2d(profiles: &[GenreProfile]) -> Result<Projection> {
    let g = profiles.len();
    if g < 3 {
        return Err(Error::invalid(format!("projection needs at least 3 genres, got {g}")));
    }
    let mut x = DMatrix::from_fn(g, 5, |i, j| profiles[i].normalized.0[j]);
    for j in 0..5 {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    let total = x.norm_squared();
    let genres: Vec<String> = profiles.iter().map(|p| p.genre.clone()).collect();
    let traits: Vec<String> = Factor::ALL.iter().map(|f| f.name().to_string()).collect();
    if total == 0.0 {
        log::warn!("genre profiles have no spread; projection is degenerate");
        return Ok(Projection {
            genres,
            coordinates: vec![[0.0; 2]; g],
            loadings: vec![[0.0; 2]; 5],
            explained: [0.0; 2],
        });
    }
    let m = SparseMatrix::from_dense("profiles", genres.clone(), traits, &x)?;
    let f = truncated_svd(&m, 2, 0)?;
    let coords = f.row_vectors();
    Ok(Projection {
        genres,
        coordinates: (0..g).map(|i| [coords[(i, 0)], coords[(i, 1)]]).collect(),
        loadings: (0..5).map(|j| [f.v[(j, 0)], f.v[(j, 1)]]).collect(),
        explained: [f.s[0] * f.s[0] / total, f.s[1] * f.s[1] / total],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traits_for(scores: &[[f64; 5]]) -> (Vec<String>, BTreeMap<String, FactorScores>) {
        let items: Vec<String> = (0..scores.len()).map(|i| format!("p{i}")).collect();
        let t = items.iter().cloned().zip(scores.iter().map(|s| FactorScores(*s))).collect();
        (items, t)
    }

    #[test]
    fn two_genres_normalize_to_unit() {
        let (items, t) = traits_for(&[[3.0; 5], [3.0; 5], [5.0; 5]]);
        let g = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(1)]);
        let p = genre_profiles(&g, &items, &t).unwrap();
        assert_eq!(p[0].medians.0, [3.0; 5]);
        assert_eq!(p[0].normalized.0, [-1.0; 5]);
        assert_eq!(p[1].normalized.0, [1.0; 5]);
    }

    #[test]
    fn single_genre_is_an_error() {
        let (items, t) = traits_for(&[[3.0; 5], [4.0; 5]]);
        let g = ClusterResult::from_assignment(vec![Some(0), Some(0)]);
        assert!(genre_profiles(&g, &items, &t).is_err());
    }

    #[test]
    fn unscored_genre_dropped() {
        let (items, mut t) = traits_for(&[[1.0; 5], [2.0; 5], [3.0; 5]]);
        t.remove("p2");
        let g = ClusterResult::from_assignment(vec![Some(0), Some(1), Some(2)]);
        let p = genre_profiles(&g, &items, &t).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn one_dimensional_spread() {
        let scores: Vec<[f64; 5]> = (0..4).map(|i| [3.0, 3.0, 1.0 + i as f64, 3.0, 3.0]).collect();
        let (items, t) = traits_for(&scores);
        let g = ClusterResult::from_assignment((0..4).map(Some).collect());
        let p = genre_profiles(&g, &items, &t).unwrap();
        let proj = project_profiles_2d(&p).unwrap();
        assert!(proj.explained[0] > 0.999);
        let cx: f64 = proj.coordinates.iter().map(|c| c[0]).sum();
        assert!(cx.abs() < 1e-12);
        assert!(proj.loadings[Factor::Openness.index()][0].abs() > 0.999);
    }
}
