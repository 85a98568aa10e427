//! Labelled sparse matrices and the weighting/consolidation steps applied to
//! the book-by-tag matrix.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cluster::ClusterResult;
use crate::corpus::TagCorpus;
use crate::error::{Error, Result};
use crate::numeric::median;

/// Row-compressed sparse matrix with row and column labels.
///
/// Each row is sorted by column index, holds no duplicate columns, and stores
/// only finite nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    kind: String,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn empty(kind: &str, row_labels: Vec<String>, col_labels: Vec<String>) -> Self {
        let rows = vec![Vec::new(); row_labels.len()];
        SparseMatrix {
            kind: kind.to_string(),
            row_labels,
            col_labels,
            rows,
        }
    }

    pub fn from_triplets(
        kind: &str,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut m = Self::empty(kind, row_labels, col_labels);
        for (r, c, v) in triplets {
            if r >= m.n_rows() || c >= m.n_cols() {
                return Err(Error::invalid(format!("entry ({r}, {c}) outside {}x{}", m.n_rows(), m.n_cols())));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({r}, {c})")));
            }
            if v != 0.0 {
                m.rows[r].push((c, v));
            }
        }
        for (r, row) in m.rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("duplicate entry ({r}, {})", w[0].0)));
            }
        }
        Ok(m)
    }

    pub fn from_dense(kind: &str, row_labels: Vec<String>, col_labels: Vec<String>, dense: &DMatrix<f64>) -> Result<Self> {
        if dense.nrows() != row_labels.len() || dense.ncols() != col_labels.len() {
            return Err(Error::invalid("label counts do not match dense shape"));
        }
        let triplets = (0..dense.nrows())
            .flat_map(|i| (0..dense.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, dense[(i, j)]))
            .collect::<Vec<_>>();
        Self::from_triplets(kind, row_labels, col_labels, triplets)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn with_kind(mut self, kind: &str) -> Self {
        self.kind = kind.to_string();
        self
    }

    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    /// Row-dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        for &(j, v) in &self.rows[i] {
            out[j] = v;
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    /// Number of nonzero entries in each column.
    pub fn column_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols()];
        for (_, j, _) in self.triplets() {
            counts[j] += 1;
        }
        counts
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows(), self.n_cols());
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.triplets().map(|(_, _, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.n_cols()];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v));
        }
        SparseMatrix {
            kind: self.kind.clone(),
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            rows,
        }
    }

    /// `self * x` for a dense `x` with `n_cols` rows. Rows are computed
    /// independently so the result does not depend on the worker count.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n_cols(), "dimension mismatch");
        let k = x.ncols();
        let rows: Vec<Vec<f64>> = self
            .rows
            .par_iter()
            .map(|row| {
                let mut acc = vec![0.0; k];
                for &(j, v) in row {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += v * x[(j, c)];
                    }
                }
                acc
            })
            .collect();
        DMatrix::from_fn(self.n_rows(), k, |i, c| rows[i][c])
    }

    fn map_rows(&self, kind: &str, f: impl Fn(&[(usize, f64)]) -> Vec<(usize, f64)>) -> SparseMatrix {
        SparseMatrix {
            kind: kind.to_string(),
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
            rows: self.rows.iter().map(|r| f(r)).collect(),
        }
    }

    /// Write as delimited triplets. The first record names the matrix kind;
    /// every row and column label is declared before the entries so empty
    /// rows and columns survive a round trip.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", self.kind.as_str(), ""])?;
        w.write_record(["row_label", "col_label", "value"])?;
        for r in &self.row_labels {
            w.write_record([r.as_str(), "", ""])?;
        }
        for c in &self.col_labels {
            w.write_record(["", c.as_str(), ""])?;
        }
        for (i, j, v) in self.triplets() {
            w.write_record([self.row_labels[i].as_str(), self.col_labels[j].as_str(), &v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_triplets(path: &Path) -> Result<SparseMatrix> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
        let bad = |line: u64, reason: &str| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let mut records = rdr.records();
        let kind = match records.next() {
            Some(r) => {
                let r = r?;
                if r.get(0) != Some("kind") {
                    return Err(bad(1, "missing `kind` header"));
                }
                r.get(1).unwrap_or_default().to_string()
            }
            None => return Err(bad(1, "empty matrix file")),
        };
        records.next().transpose()?;
        let mut row_labels = Vec::new();
        let mut col_labels = Vec::new();
        let mut row_index = HashMap::new();
        let mut col_index = HashMap::new();
        let mut triplets = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 3 {
                return Err(bad(line, "expected `row_label,col_label,value`"));
            }
            match (&rec[0], &rec[1], &rec[2]) {
                (r, "", "") => {
                    row_index.insert(r.to_string(), row_labels.len());
                    row_labels.push(r.to_string());
                }
                ("", c, "") => {
                    col_index.insert(c.to_string(), col_labels.len());
                    col_labels.push(c.to_string());
                }
                (r, c, v) => {
                    let i = *row_index.get(r).ok_or_else(|| bad(line, "undeclared row label"))?;
                    let j = *col_index.get(c).ok_or_else(|| bad(line, "undeclared column label"))?;
                    let v: f64 = v.parse().map_err(|_| bad(line, "value is not a number"))?;
                    triplets.push((i, j, v));
                }
            }
        }
        SparseMatrix::from_triplets(&kind, row_labels, col_labels, triplets)
    }
}

/// Raw book-by-tag count matrix; rows follow `corpus.books`, columns `corpus.tags`.
pub fn count_matrix(corpus: &TagCorpus) -> SparseMatrix {
    let books: HashMap<&str, usize> = corpus.books.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
    let tags: HashMap<&str, usize> = corpus.tags.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let triplets = corpus
        .applications
        .iter()
        .filter_map(|a| Some((*books.get(a.book_id.as_str())?, *tags.get(a.tag.as_str())?, a.count as f64)));
    SparseMatrix::from_triplets("counts", corpus.books.clone(), corpus.tags.clone(), triplets)
        .expect("corpus applications are unique and positive")
}

/// `f · ln(1 + N / n_t)` per entry, with `N` the row count and `n_t` the
/// number of nonzero rows in column `t`. Empty columns are dropped.
pub fn tfidf(counts: &SparseMatrix) -> SparseMatrix {
    let n = counts.n_rows() as f64;
    let df = counts.column_nnz();
    let kept: Vec<usize> = (0..counts.n_cols()).filter(|&j| df[j] > 0).collect();
    let mut new_index = vec![usize::MAX; counts.n_cols()];
    for (k, &j) in kept.iter().enumerate() {
        new_index[j] = k;
    }
    let idf: Vec<f64> = df.iter().map(|&d| if d > 0 { (1.0 + n / d as f64).ln() } else { 0.0 }).collect();
    SparseMatrix {
        kind: "tfidf".to_string(),
        row_labels: counts.row_labels.clone(),
        col_labels: kept.iter().map(|&j| counts.col_labels[j].clone()).collect(),
        rows: counts
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, f)| (new_index[j], f * idf[j])).collect())
            .collect(),
    }
}

/// Scale every nonzero row to unit Euclidean norm. Returns the labels of
/// all-zero rows, which are left unchanged.
pub fn normalize_rows(m: &SparseMatrix) -> (SparseMatrix, Vec<String>) {
    let zero_rows: Vec<String> = (0..m.n_rows())
        .filter(|&i| m.rows[i].is_empty())
        .map(|i| m.row_labels[i].clone())
        .collect();
    for label in &zero_rows {
        log::warn!("row `{label}` is all zero and cannot be normalized");
    }
    let out = m.map_rows(m.kind(), |row| {
        let norm = row.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        row.iter().map(|&(j, v)| (j, v / norm)).collect()
    });
    (out, zero_rows)
}

/// Sum the unit book rows of each page and renormalize. Pages (sorted by id)
/// with no book present in `m` are dropped and reported.
pub fn consolidate_pages(m: &SparseMatrix, page_books: &BTreeMap<String, Vec<String>>) -> (SparseMatrix, Vec<String>) {
    let index: HashMap<&str, usize> = m.row_labels.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (page, books) in page_books {
        let members: Vec<usize> = books.iter().filter_map(|b| index.get(b.as_str()).copied()).collect();
        if members.is_empty() {
            log::warn!("page `{page}` has no books in the matrix; dropped");
            dropped.push(page.clone());
            continue;
        }
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &b in &members {
            for &(j, v) in &m.rows[b] {
                *acc.entry(j).or_default() += v;
            }
        }
        let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        let row: Vec<(usize, f64)> = acc
            .into_iter()
            .filter(|e| e.1 != 0.0)
            .map(|(j, v)| (j, v / norm))
            .collect();
        labels.push(page.clone());
        rows.push(row);
    }
    let out = SparseMatrix {
        kind: "pages".to_string(),
        row_labels: labels,
        col_labels: m.col_labels.clone(),
        rows,
    };
    (out, dropped)
}

/// Replace tag columns by one column per cluster holding the per-row median
/// of the member columns (unapplied tags count as zero). Noise columns are
/// dropped. `labels[c]` names cluster `c`.
pub fn consolidate_tag_clusters(m: &SparseMatrix, clusters: &ClusterResult, labels: &[String]) -> Result<SparseMatrix> {
    if clusters.assignment.len() != m.n_cols() {
        return Err(Error::invalid(format!(
            "cluster assignment covers {} items, matrix has {} columns",
            clusters.assignment.len(),
            m.n_cols()
        )));
    }
    if labels.len() != clusters.k {
        return Err(Error::invalid("one label per cluster required"));
    }
    let members = clusters.members();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCluster(c));
    }
    let rows = m
        .rows
        .iter()
        .map(|row| {
            let mut out = Vec::new();
            for (c, cols) in members.iter().enumerate() {
                let vals: Vec<f64> = cols
                    .iter()
                    .map(|&j| row.binary_search_by_key(&j, |e| e.0).map(|k| row[k].1).unwrap_or(0.0))
                    .collect();
                let med = median(&vals).unwrap_or(0.0);
                if med != 0.0 {
                    out.push((c, med));
                }
            }
            out
        })
        .collect();
    Ok(SparseMatrix {
        kind: "clusters".to_string(),
        row_labels: m.row_labels.clone(),
        col_labels: labels.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterResult;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn dense(rows: &[&[f64]]) -> SparseMatrix {
        let d = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        SparseMatrix::from_dense("test", labels("r", rows.len()), labels("c", rows[0].len()), &d).unwrap()
    }

    #[test]
    fn tfidf_hand_values() {
        // 10 books; column 0 on 2 books (f = 3 and 1), column 1 on all books (f = 1)
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0, 1.0, 0.0]; 10];
        rows[0][0] = 3.0;
        rows[1][0] = 1.0;
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = tfidf(&dense(&refs));
        assert_eq!(t.n_cols(), 2, "empty column dropped");
        assert!((t.get(0, 0) - 3.0 * 6f64.ln()).abs() < 1e-12);
        assert!((t.get(0, 0) - 5.37528).abs() < 1e-5);
        assert!((t.get(5, 1) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(t.get(5, 0), 0.0);
    }

    #[test]
    fn normalize_examples() {
        let m = dense(&[&[3.0, 4.0], &[1.0, 0.0], &[0.0, 0.0]]);
        let (n, zero) = normalize_rows(&m);
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(n.row(1), m.row(1));
        assert!(n.row(2).is_empty());
        assert_eq!(zero, vec!["r2".to_string()]);
    }

    #[test]
    fn page_consolidation_examples() {
        let m = dense(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
        let mut pages = BTreeMap::new();
        pages.insert("solo".to_string(), vec!["r1".to_string()]);
        pages.insert("same".to_string(), vec!["r0".to_string(), "r2".to_string()]);
        pages.insert("orth".to_string(), vec!["r0".to_string(), "r1".to_string()]);
        pages.insert("ghost".to_string(), vec!["r9".to_string()]);
        let (p, dropped) = consolidate_pages(&m, &pages);
        assert_eq!(dropped, vec!["ghost".to_string()]);
        assert_eq!(p.row_labels(), &["orth", "same", "solo"]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.get(0, 0) - h).abs() < 1e-15 && (p.get(0, 1) - h).abs() < 1e-15);
        assert_eq!(p.dense_row(1), vec![1.0, 0.0, 0.0]);
        assert_eq!(p.dense_row(2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cluster_medians() {
        let m = dense(&[&[0.0, 2.0, 10.0, 4.0, 7.0], &[5.0, 0.0, 0.0, 0.0, 1.0]]);
        let c = ClusterResult::from_assignment(vec![Some(0), Some(0), Some(0), Some(1), None]);
        let labels = vec!["triple".to_string(), "single".to_string()];
        let out = consolidate_tag_clusters(&m, &c, &labels).unwrap();
        assert_eq!(out.dense_row(0), vec![2.0, 4.0]);
        assert_eq!(out.dense_row(1), vec![0.0, 0.0]);

        let c = ClusterResult::from_assignment(vec![None, None, None, Some(0), Some(0)]);
        let out = consolidate_tag_clusters(&m, &c, &["pair".to_string()]).unwrap();
        assert_eq!(out.dense_row(0), vec![5.5]);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let m = dense(&[&[1.0, 2.0]]);
        let mut c = ClusterResult::from_assignment(vec![Some(0), Some(0)]);
        c.k = 2;
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(consolidate_tag_clusters(&m, &c, &labels), Err(Error::EmptyCluster(1))));
    }

    #[test]
    fn duplicate_triplets_rejected() {
        let r = SparseMatrix::from_triplets("x", labels("r", 1), labels("c", 1), [(0, 0, 1.0), (0, 0, 2.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn triplet_file_round_trip_keeps_empty_rows() {
        let m = dense(&[&[0.0, 0.25], &[0.0, 0.0], &[1.0 / 3.0, 0.0]]).with_kind("tfidf");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write_triplets(&path).unwrap();
        let back = SparseMatrix::read_triplets(&path).unwrap();
        assert_eq!(back, m);
    }
}
