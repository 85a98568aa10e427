//! Library results checked against independent computations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use tagprof_core::cluster::{pam, DistanceMatrix};
use tagprof_core::corpus::{TagApplication, TagCorpus};
use tagprof_core::lowrank::{cosine_matrix, truncated_svd};
use tagprof_core::matrix::{count_matrix, tfidf, SparseMatrix};
use tagprof_core::regress::{lambda_max, lasso_fit, Dataset};
use tagprof_core::rng::{self, StreamRng};
use tagprof_core::stats::pearson;
use tagprof_core::stats::special::{incomplete_beta, t_two_sided_p};

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn pearson_p_matches_students_t() {
    let mut r = rng::stream(1, "pearson", 0);
    for n in [3usize, 4, 7, 20, 100, 1000] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.3 * v + normal(&mut r)).collect();
            let (rr, p) = pearson(&x, &y).unwrap();
            let df = (n - 2) as f64;
            let t = rr * (df / (1.0 - rr * rr)).sqrt();
            let oracle = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
            assert!((p - oracle).abs() <= 1e-10 * oracle.max(1e-300) + 1e-14, "n {n}: {p} vs {oracle}");
        }
    }
}

#[test]
fn incomplete_beta_matches_statrs() {
    let mut r = rng::stream(2, "beta", 0);
    for _ in 0..500 {
        let a = r.random_range(0.1..60.0);
        let b = r.random_range(0.1..60.0);
        let x = r.random_range(0.0..1.0);
        let ours = incomplete_beta(a, b, x);
        let oracle = beta_reg(a, b, x);
        assert!((ours - oracle).abs() < 1e-12, "I({x}; {a}, {b}) = {ours} vs {oracle}");
    }
}

#[test]
fn t_tail_matches_statrs_for_large_t() {
    for df in [1.0, 2.5, 10.0, 300.0] {
        for t in [0.0, 0.5, 2.0, 6.0, 25.0] {
            let oracle = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t);
            let ours = t_two_sided_p(t, df);
            assert!((ours - oracle).abs() <= 1e-10 * oracle + 1e-15, "t {t} df {df}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn tfidf_matches_dense_evaluation() {
    let mut r = rng::stream(3, "tfidf", 0);
    for _ in 0..20 {
        let (nb, nt) = (r.random_range(1..12), r.random_range(1..15));
        let dense = DMatrix::from_fn(nb, nt, |_, _| if r.random_bool(0.4) { r.random_range(1..9) as f64 } else { 0.0 });
        let books = names("b", nb);
        let tags = names("t", nt);
        let mut applications = Vec::new();
        for i in 0..nb {
            for j in 0..nt {
                if dense[(i, j)] > 0.0 {
                    applications.push(TagApplication {
                        book_id: books[i].clone(),
                        tag: tags[j].clone(),
                        count: dense[(i, j)] as u64,
                    });
                }
            }
        }
        let corpus = TagCorpus {
            books,
            tags: tags.clone(),
            applications,
            ..TagCorpus::default()
        };
        let w = tfidf(&count_matrix(&corpus));
        let mut col = 0;
        for j in 0..nt {
            let df = (0..nb).filter(|&i| dense[(i, j)] > 0.0).count();
            if df == 0 {
                assert!(!w.col_labels().contains(&tags[j]));
                continue;
            }
            assert_eq!(w.col_labels()[col], tags[j]);
            for i in 0..nb {
                let expect = dense[(i, j)] * (1.0 + nb as f64 / df as f64).ln();
                assert!((w.get(i, col) - expect).abs() < 1e-12);
            }
            col += 1;
        }
        assert_eq!(col, w.n_cols());
    }
}

#[test]
fn singular_values_match_eigen_oracle() {
    let mut r = rng::stream(4, "svd", 0);
    for _ in 0..30 {
        let (m, n) = (r.random_range(2..25), r.random_range(2..25));
        let a = DMatrix::from_fn(m, n, |_, _| normal(&mut r));
        let sparse = SparseMatrix::from_dense("a", names("r", m), names("c", n), &a).unwrap();
        let rank = r.random_range(1..=m.min(n));
        let f = truncated_svd(&sparse, rank, 7).unwrap();
        let mut oracle: Vec<f64> = SymmetricEigen::new(&a * a.transpose())
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (s, o) in f.s.iter().zip(&oracle) {
            assert!((s - o).abs() < 1e-8 * o.max(1.0), "{s} vs {o}");
        }
        // factors are orthonormal
        let eye = DMatrix::<f64>::identity(rank, rank);
        assert!((f.u.transpose() * &f.u - &eye).amax() < 1e-10);
        assert!((f.v.transpose() * &f.v - &eye).amax() < 1e-10);
    }
}

#[test]
fn full_rank_cosines_equal_column_cosines() {
    let mut r = rng::stream(5, "cos", 0);
    let a = DMatrix::from_fn(9, 6, |_, _| normal(&mut r));
    let sparse = SparseMatrix::from_dense("a", names("r", 9), names("c", 6), &a).unwrap();
    let f = truncated_svd(&sparse, 6, 1).unwrap();
    let cos = cosine_matrix(&f.column_vectors());
    for i in 0..6 {
        for j in 0..6 {
            let (ci, cj) = (a.column(i), a.column(j));
            let expect = ci.dot(&cj) / (ci.norm() * cj.norm());
            assert!((cos[(i, j)] - expect).abs() < 1e-10);
        }
    }
}

#[test]
fn unpenalized_lasso_is_least_squares() {
    let mut r = rng::stream(6, "ols", 0);
    for _ in 0..10 {
        let (n, p) = (r.random_range(30..120), r.random_range(1..10));
        let x = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
        let y: Vec<f64> = (0..n).map(|i| 1.0 + x.row(i).sum() + normal(&mut r)).collect();
        let z = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let coef = (z.transpose() * &z).lu().solve(&(z.transpose() * DVector::from_column_slice(&y))).unwrap();
        let fit = lasso_fit(&Dataset::new(x, y, names("x", p)).unwrap(), 0.0).unwrap();
        assert!((fit.intercept - coef[0]).abs() < 1e-6);
        for j in 0..p {
            assert!((fit.beta[j] - coef[j + 1]).abs() < 1e-6);
        }
    }
}

#[test]
fn lasso_at_lambda_max_is_empty_and_just_below_is_not() {
    let mut r = rng::stream(7, "lmax", 0);
    let x = DMatrix::from_fn(80, 6, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..80).map(|i| 2.0 * x[(i, 2)] + normal(&mut r)).collect();
    let d = Dataset::new(x, y, names("x", 6)).unwrap();
    let top = lambda_max(&d);
    assert_eq!(lasso_fit(&d, top).unwrap().support(), 0);
    let fit = lasso_fit(&d, 0.99 * top).unwrap();
    assert_eq!(fit.support(), 1);
    assert!(fit.beta[2] > 0.0);
}

fn brute_force_cost(d: &DistanceMatrix, k: usize) -> f64 {
    let n = d.len();
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| {
            (0..n)
                .map(|i| (0..n).filter(|c| m & (1 << c) != 0).map(|c| d.get(i, c)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn pam_reaches_exhaustive_optimum_on_separated_instances() {
    // three well separated pairs: every swap-local optimum is global
    let pts = [[0.0, 0.0], [0.3, 0.1], [8.0, 0.0], [8.2, 0.4], [4.0, 9.0], [4.1, 8.6]];
    let d = DistanceMatrix::euclidean(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>());
    for k in 1..=6 {
        let out = pam(&d, k).unwrap();
        assert!((out.cost - brute_force_cost(&d, k)).abs() < 1e-12, "k {k}");
    }
}

#[test]
fn pam_on_collinear_points() {
    let pts: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 10.0, 11.0, 30.0].iter().map(|v| vec![*v]).collect();
    let d = DistanceMatrix::euclidean(&pts);
    for k in 1..=6 {
        let out = pam(&d, k).unwrap();
        assert!((out.cost - brute_force_cost(&d, k)).abs() < 1e-12, "k {k}");
        assert!(out.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
