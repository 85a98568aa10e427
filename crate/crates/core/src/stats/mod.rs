//! Correlation tables with significance, genre profiles and their 2-D
//! projection, and the like-count disposition check.

mod genre;
pub mod special;

pub use genre::{genre_profiles, project_profiles_2d, GenreProfile, Projection};

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Factor, FactorScores, UserRecord};
use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

/// Sample Pearson correlation and its two-sided p-value from the t test
/// with `n − 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("pearson needs at least 3 pairs"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::NoVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        special::t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok((r, p))
}

/// `*` below 0.05, `**` below 0.01, `***` below 0.001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub feature: String,
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub r: f64,
    pub p: f64,
    pub n: usize,
    /// Set when either series was constant; `r` is then 0 and `p` 1.
    #[serde(default)]
    pub no_variance: bool,
}

impl CorrelationEntry {
    fn compute(feature: &str, trait_name: &str, x: &[f64], y: &[f64]) -> Result<Self> {
        let (r, p, no_variance) = match pearson(x, y) {
            Ok((r, p)) => (r, p, false),
            Err(Error::NoVariance) => (0.0, 1.0, true),
            Err(e) => return Err(e),
        };
        Ok(CorrelationEntry {
            feature: feature.to_string(),
            trait_name: trait_name.to_string(),
            r,
            p,
            n: x.len(),
            no_variance,
        })
    }

    pub fn stars(&self) -> &'static str {
        if self.no_variance {
            ""
        } else {
            stars(self.p)
        }
    }
}

/// One entry per (feature column, trait) over the pages present in both
/// inputs, ordered by feature label then trait name.
pub fn correlation_table(features: &SparseMatrix, traits: &BTreeMap<String, FactorScores>) -> Result<Vec<CorrelationEntry>> {
    let rows: Vec<(usize, &FactorScores)> = features
        .row_labels()
        .iter()
        .enumerate()
        .filter_map(|(i, page)| traits.get(page).map(|s| (i, s)))
        .collect();
    let missing = features.n_rows() - rows.len();
    if missing > 0 {
        log::warn!("{missing} feature rows have no aggregated traits and are skipped");
    }
    if rows.len() < 3 {
        return Err(Error::invalid(format!("only {} pages have both features and traits", rows.len())));
    }
    let trait_cols: Vec<(Factor, Vec<f64>)> =
        Factor::ALL.iter().map(|&f| (f, rows.iter().map(|(_, s)| s.get(f)).collect())).collect();
    let mut entries: Vec<CorrelationEntry> = (0..features.n_cols())
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = rows.iter().map(|&(i, _)| features.get(i, c)).collect();
            trait_cols
                .iter()
                .map(|(f, y)| CorrelationEntry::compute(&features.col_labels()[c], f.name(), &x, y))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    entries.sort_by(|a, b| a.feature.cmp(&b.feature).then_with(|| a.trait_name.cmp(&b.trait_name)));
    Ok(entries)
}

/// The `k` most negative and `k` most positive entries for `trait_name`,
/// strongest first; ties broken by feature label.
pub fn top_correlations<'a>(
    entries: &'a [CorrelationEntry],
    trait_name: &str,
    k: usize,
) -> (Vec<&'a CorrelationEntry>, Vec<&'a CorrelationEntry>) {
    let of_trait = || entries.iter().filter(move |e| e.trait_name == trait_name && !e.no_variance);
    let mut neg: Vec<_> = of_trait().filter(|e| e.r < 0.0).collect();
    neg.sort_by(|a, b| a.r.total_cmp(&b.r).then_with(|| a.feature.cmp(&b.feature)));
    neg.truncate(k);
    let mut pos: Vec<_> = of_trait().filter(|e| e.r > 0.0).collect();
    pos.sort_by(|a, b| b.r.total_cmp(&a.r).then_with(|| a.feature.cmp(&b.feature)));
    pos.truncate(k);
    (neg, pos)
}

/// Columns `feature,trait,r,p,stars,n`.
pub fn write_correlations(path: &Path, entries: &[CorrelationEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "trait", "r", "p", "stars", "n"])?;
    for e in entries {
        w.write_record([
            e.feature.as_str(),
            e.trait_name.as_str(),
            &e.r.to_string(),
            &e.p.to_string(),
            e.stars(),
            &e.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_correlations(path: &Path) -> Result<Vec<CorrelationEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            path: path.to_path_buf(),
            line: line as u64 + 2,
            reason: reason.to_string(),
        };
        if rec.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let r: f64 = rec[2].parse().map_err(|_| bad("r is not a number"))?;
        let p: f64 = rec[3].parse().map_err(|_| bad("p is not a number"))?;
        let n: usize = rec[5].parse().map_err(|_| bad("n is not an integer"))?;
        out.push(CorrelationEntry {
            feature: rec[0].to_string(),
            trait_name: rec[1].to_string(),
            r,
            p,
            n,
            no_variance: false,
        });
    }
    Ok(out)
}

/// Correlation between each trait and the number of distinct pages a user
/// liked. Constant series yield a flagged no-variance entry.
pub fn disposition_correlation(users: &[UserRecord]) -> Result<Vec<CorrelationEntry>> {
    if users.len() < 3 {
        return Err(Error::invalid("disposition needs at least 3 users"));
    }
    let likes: Vec<f64> = users
        .iter()
        .map(|u| {
            let mut p: Vec<&String> = u.liked_pages.iter().collect();
            p.sort();
            p.dedup();
            p.len() as f64
        })
        .collect();
    Factor::ALL
        .iter()
        .map(|&f| {
            let t: Vec<f64> = users.iter().map(|u| u.scores.get(f)).collect();
            let e = CorrelationEntry::compute("liked_pages", f.name(), &t, &likes)?;
            if e.no_variance {
                log::warn!("no variance for {f} vs like counts");
            }
            Ok(e)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (r, p) = pearson(&x, &x).unwrap();
        assert_eq!((r, p), (1.0, 0.0));
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson(&x, &y).unwrap().0 + 1.0).abs() < 1e-15);
        let (r, p) = pearson(&x, &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert!((p - 0.104).abs() < 5e-4, "p {p}");
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::NoVariance)));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.009), "**");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.05), "");
    }

    fn users(likes: &[usize]) -> Vec<UserRecord> {
        likes
            .iter()
            .enumerate()
            .map(|(i, &n)| UserRecord {
                user_id: format!("u{i}"),
                scores: FactorScores([1.0 + i as f64, 3.0, 3.0, 3.0, 3.0]),
                liked_pages: (0..n).map(|p| format!("p{p}")).collect(),
            })
            .collect()
    }

    #[test]
    fn disposition_flags_constant_series() {
        let e = disposition_correlation(&users(&[2, 2, 2, 2])).unwrap();
        assert!(e.iter().all(|e| e.no_variance && e.r == 0.0 && e.p == 1.0));
        let e = disposition_correlation(&users(&[1, 2, 3, 4])).unwrap();
        assert_eq!(e[0].trait_name, "extraversion");
        assert!((e[0].r - 1.0).abs() < 1e-15);
        assert!(e[1].no_variance);
    }

    #[test]
    fn table_order_and_identity() {
        let pages: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let mut traits = BTreeMap::new();
        let mut trip = Vec::new();
        for (i, p) in pages.iter().enumerate() {
            let s = [i as f64, (i * i) as f64, 1.0 + (i % 2) as f64, 2.0, 5.0 - i as f64];
            traits.insert(p.clone(), FactorScores(s));
            trip.push((i, 0, 1.0 + i as f64));
            trip.push((i, 1, 1.0 + (i % 3) as f64));
        }
        let m = SparseMatrix::from_triplets("pages", pages, vec!["zeta".into(), "alpha".into()], trip).unwrap();
        let t = correlation_table(&m, &traits).unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0].feature, "alpha");
        assert_eq!(t[0].trait_name, "agreeableness");
        let ext = t.iter().find(|e| e.feature == "zeta" && e.trait_name == "extraversion").unwrap();
        assert!((ext.r - 1.0).abs() < 1e-15);
        assert!(t.iter().find(|e| e.feature == "zeta" && e.trait_name == "neuroticism").unwrap().no_variance);
        let (neg, pos) = top_correlations(&t, "conscientiousness", 5);
        assert_eq!(neg[0].feature, "zeta");
        assert!(pos.iter().all(|e| e.r > 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = vec![CorrelationEntry {
            feature: "c1".into(),
            trait_name: "openness".into(),
            r: -0.25,
            p: 0.003,
            n: 120,
            no_variance: false,
        }];
        let path = dir.path().join("c.csv");
        write_correlations(&path, &e).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("c1,openness,-0.25,0.003,**,120"));
        assert_eq!(read_correlations(&path).unwrap(), e);
    }
}
