//! Truncated SVD by randomized block subspace iteration, and cosine
//! similarity between the factorized column (or row) vectors.

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;
use crate::rng;

/// `M ≈ U · diag(S) · Vᵀ` with orthonormal columns in `U` and `V` and `S`
/// sorted nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Relative change in the leading singular values accepted as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond `rank` (the block is at least `2 · rank`).
    pub oversample: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            tol: 1e-10,
            max_iter: 2000,
            oversample: 10,
        }
    }
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.s.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Column vectors of the approximation in factor coordinates: row `t`
    /// of `V · diag(S)`. Cosines between these equal cosines between the
    /// columns of the reconstructed matrix.
    pub fn column_vectors(&self) -> DMatrix<f64> {
        scale_columns(&self.v, &self.s)
    }

    /// Row vectors of the approximation in factor coordinates: `U · diag(S)`.
    pub fn row_vectors(&self) -> DMatrix<f64> {
        scale_columns(&self.u, &self.s)
    }

    /// Write `u.csv`, `s.csv` and `v.csv` into `dir`.
    pub fn write(&self, dir: &Path, row_labels: &[String], col_labels: &[String]) -> Result<()> {
        write_dense(&dir.join("u.csv"), &self.u, row_labels)?;
        write_dense(&dir.join("v.csv"), &self.v, col_labels)?;
        let s = DMatrix::from_column_slice(self.s.len(), 1, &self.s);
        let labels: Vec<String> = (0..self.s.len()).map(|i| format!("s{i}")).collect();
        write_dense(&dir.join("s.csv"), &s, &labels)
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (c, v) in s.iter().enumerate() {
        out.column_mut(c).scale_mut(*v);
    }
    out
}

pub fn write_dense(path: &Path, m: &DMatrix<f64>, row_labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..m.ncols()).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    for (i, label) in row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a matrix written by [`write_dense`]: row labels and values.
pub fn read_dense(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let cols = rdr.headers()?.len().saturating_sub(1);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols + 1 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected {} fields", cols + 1),
            });
        }
        labels.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            values.push(v.parse::<f64>().map_err(|_| Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("`{v}` is not a number"),
            })?);
        }
    }
    Ok((labels.clone(), DMatrix::from_row_slice(labels.len(), cols, &values)))
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Best rank-`rank` approximation of `m` with default options.
pub fn truncated_svd(m: &SparseMatrix, rank: usize, seed: u64) -> Result<LowRankFactors> {
    truncated_svd_with(m, rank, seed, &SvdOptions::default())
}

pub fn truncated_svd_with(m: &SparseMatrix, rank: usize, seed: u64, opts: &SvdOptions) -> Result<LowRankFactors> {
    let (rows, cols) = (m.n_rows(), m.n_cols());
    let min_dim = rows.min(cols);
    if rank == 0 || rank > min_dim {
        return Err(Error::invalid(format!("rank {rank} outside 1..={min_dim}")));
    }
    let block = min_dim.min((rank + opts.oversample).max(2 * rank));
    let mt = m.transpose();

    let mut rng = rng::stream(seed, "truncated_svd", 0);
    let omega = DMatrix::from_fn(cols, block, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(m.mul_dense(&omega));
    let mut previous: Option<Vec<f64>> = None;

    for iter in 1..=opts.max_iter {
        // Rayleigh-Ritz on span(q): Mᵀq = W Σ Xᵀ, hence qᵀM = X Σ Wᵀ.
        let z = mt.mul_dense(&q);
        let (w, sigma, x) = sorted_svd(z.clone());
        let scale = sigma.first().copied().unwrap_or(0.0);
        let exact = block == min_dim;
        let converged = scale == 0.0
            || exact
            || previous.as_ref().is_some_and(|prev| {
                (0..rank).all(|i| (sigma[i] - prev[i]).abs() <= opts.tol * scale)
            });
        if converged {
            return Ok(finish(&q, w, sigma, x, rank));
        }
        if iter == opts.max_iter {
            let f = finish(&q, w, sigma, x, rank);
            return Err(Error::SvdNotConverged {
                iterations: iter,
                residual: residual(m, &f) / scale,
            });
        }
        previous = Some(sigma);
        q = orthonormal_basis(m.mul_dense(&orthonormal_basis(z)));
    }
    unreachable!("loop returns on its last iteration")
}

/// SVD of `z` (n×b, n ≥ b) with singular values sorted nonincreasing.
/// Returns (left vectors n×b, values, right vectors b×b as columns).
///
/// One-sided Jacobi: rotate column pairs of `z` until all are mutually
/// orthogonal; the column norms are then the singular values.
fn sorted_svd(z: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, b) = z.shape();
    let mut a = z;
    let mut v = DMatrix::<f64>::identity(b, b);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..b {
            for j in (i + 1)..b {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..b).map(|c| a.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let values: Vec<f64> = order.iter().map(|&c| norms[c]).collect();
    let scale = values.first().copied().unwrap_or(0.0);
    let mut u = DMatrix::<f64>::zeros(n, b);
    let mut filled = 0;
    for (k, &c) in order.iter().enumerate() {
        if values[k] > f64::EPSILON * scale * b as f64 && values[k] > 0.0 {
            u.set_column(k, &(a.column(c) / values[k]));
            filled += 1;
        }
    }
    complete_basis(&mut u, filled);
    let v = DMatrix::from_fn(b, b, |r, k| v[(r, order[k])]);
    (u, values, v)
}

fn rotate(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Fill columns `from..` with unit vectors orthogonal to all earlier ones.
fn complete_basis(u: &mut DMatrix<f64>, from: usize) {
    let (n, b) = u.shape();
    let mut next = from;
    for e in 0..n {
        if next == b {
            break;
        }
        let mut cand = nalgebra::DVector::<f64>::zeros(n);
        cand[e] = 1.0;
        for _ in 0..2 {
            for k in 0..next {
                let proj = u.column(k).dot(&cand);
                cand.axpy(-proj, &u.column(k), 1.0);
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            u.set_column(next, &(cand / norm));
            next += 1;
        }
    }
}

fn finish(q: &DMatrix<f64>, w: DMatrix<f64>, sigma: Vec<f64>, x: DMatrix<f64>, rank: usize) -> LowRankFactors {
    let mut u = q * x.columns(0, rank);
    let mut v = w.columns(0, rank).into_owned();
    // sign convention: largest-magnitude entry of each right vector is positive
    for c in 0..rank {
        let col = v.column(c);
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.column_mut(c).neg_mut();
            u.column_mut(c).neg_mut();
        }
    }
    LowRankFactors {
        u,
        s: sigma[..rank].to_vec(),
        v,
    }
}

fn residual(m: &SparseMatrix, f: &LowRankFactors) -> f64 {
    let mv = m.mul_dense(&f.v);
    (0..f.rank())
        .map(|c| (mv.column(c) - f.u.column(c) * f.s[c]).norm())
        .fold(0.0, f64::max)
}

/// Cosine of the angle between rows `i` and `j` of `vectors`; 0 when either
/// row is the zero vector.
pub fn cosine_rows(vectors: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let a = vectors.row(i);
    let b = vectors.row(j);
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity between the factorized vectors of tags `t` and `t2`.
pub fn tag_similarity(f: &LowRankFactors, t: usize, t2: usize) -> f64 {
    let vectors = f.column_vectors();
    let n = vectors.nrows();
    assert!(t < n && t2 < n, "tag index out of range");
    if vectors.row(t).norm() == 0.0 || vectors.row(t2).norm() == 0.0 {
        log::warn!("zero factor vector for tag {t} or {t2}; similarity set to 0");
    }
    cosine_rows(&vectors, t, t2)
}

/// All-pairs cosine similarity between the rows of `vectors`.
pub fn cosine_matrix(vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = vectors.nrows();
    let norms: Vec<f64> = (0..n).map(|i| vectors.row(i).norm()).collect();
    let gram = vectors * vectors.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else if i == j {
            1.0
        } else {
            (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    fn sparse(d: &DMatrix<f64>) -> SparseMatrix {
        SparseMatrix::from_dense("t", labels(d.nrows()), labels(d.ncols()), d).unwrap()
    }

    #[test]
    fn diagonal_rank_two() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let f = truncated_svd(&sparse(&d), 2, 1).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12 && (f.s[1] - 2.0).abs() < 1e-12);
        assert!(((d - f.reconstruct()).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outer_product_is_rank_one() {
        let u = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let v = nalgebra::DVector::from_vec(vec![2.0, 1.0, 0.0, -1.0, 4.0]);
        let d = &u * v.transpose();
        let f = truncated_svd(&sparse(&d), 1, 9).unwrap();
        assert!((f.s[0] - u.norm() * v.norm()).abs() < 1e-10);
        assert!((d - f.reconstruct()).norm() < 1e-10);
    }

    #[test]
    fn iterative_path_converges_on_larger_matrix() {
        let mut r = rng::stream(3, "test", 0);
        let d = DMatrix::from_fn(60, 40, |i, j| {
            let x: f64 = StandardNormal.sample(&mut r);
            x / (1.0 + (i + j) as f64 * 0.1)
        });
        let f = truncated_svd(&sparse(&d), 5, 11).unwrap();
        let exact = d.clone().svd(false, false).singular_values;
        let mut exact: Vec<f64> = exact.iter().copied().collect();
        exact.sort_by(|a, b| b.total_cmp(a));
        for i in 0..5 {
            assert!((f.s[i] - exact[i]).abs() <= 1e-8 * exact[0], "{i}: {} vs {}", f.s[i], exact[i]);
        }
        let utu = f.u.transpose() * &f.u;
        assert!((utu - DMatrix::identity(5, 5)).norm() < 1e-8);
    }

    #[test]
    fn deterministic_for_seed() {
        let d = DMatrix::from_fn(30, 20, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let a = truncated_svd(&sparse(&d), 3, 5).unwrap();
        let b = truncated_svd(&sparse(&d), 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_out_of_range() {
        let d = DMatrix::from_element(3, 2, 1.0);
        assert!(truncated_svd(&sparse(&d), 3, 0).is_err());
        assert!(truncated_svd(&sparse(&d), 0, 0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let f = LowRankFactors {
            u: DMatrix::identity(2, 2),
            s: vec![1.0, 1.0],
            v: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0]),
        };
        assert!((tag_similarity(&f, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(tag_similarity(&f, 0, 1), 0.0);
        assert!((tag_similarity(&f, 0, 2) + 1.0).abs() < 1e-15);
        assert_eq!(tag_similarity(&f, 0, 3), 0.0);
    }
}
