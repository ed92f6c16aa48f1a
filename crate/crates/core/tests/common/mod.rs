//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use debias_cbm::numkit::Matrix;

pub fn triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Rank by counting: `#smaller + (#equal + 1) / 2`.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Gauss-Jordan with partial pivoting on a small dense system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            for k in 0..n {
                a[r][k] -= f * a[col][k];
            }
            for k in 0..b[r].len() {
                b[r][k] -= f * b[col][k];
            }
        }
    }
    for r in 0..n {
        let d = a[r][r];
        b[r].iter_mut().for_each(|v| *v /= d);
    }
    b
}

/// Least squares with intercept via the normal equations of the augmented
/// design `[1 | X]`.
pub fn normal_equations(x: &Matrix, y: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, p) = x.shape();
    let aug = |r: usize, j: usize| if j == 0 { 1.0 } else { x[(r, j - 1)] };
    let mut xtx = vec![vec![0.0; p + 1]; p + 1];
    let mut xty = vec![vec![0.0; y.cols()]; p + 1];
    for r in 0..n {
        for i in 0..=p {
            for j in 0..=p {
                xtx[i][j] += aug(r, i) * aug(r, j);
            }
            for k in 0..y.cols() {
                xty[i][k] += aug(r, i) * y[(r, k)];
            }
        }
    }
    let beta = gauss_solve(xtx, xty);
    let intercept = beta[0].clone();
    (beta[1..].to_vec(), intercept)
}

/// Minimiser of the expected Monte Carlo objective of a linear head:
/// averaging `S` draws adds `(n/S)·tr(W Σ Wᵀ)` to the squared error, i.e. a
/// generalised ridge with penalty `(n/S)·diag(σ²)`.
pub fn mc_ridge_oracle(
    means: &Matrix,
    variance: &[f64],
    y: &Matrix,
    samples: usize,
    at: &Matrix,
) -> Matrix {
    let (n, p) = means.shape();
    let mm = means.column_means();
    let ym = y.column_means();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![vec![0.0; y.cols()]; p];
    for r in 0..n {
        for i in 0..p {
            let di = means[(r, i)] - mm[i];
            for j in 0..p {
                a[i][j] += di * (means[(r, j)] - mm[j]);
            }
            for k in 0..y.cols() {
                b[i][k] += di * (y[(r, k)] - ym[k]);
            }
        }
    }
    for i in 0..p {
        a[i][i] += n as f64 / samples as f64 * variance[i];
    }
    let w = gauss_solve(a, b);
    Matrix::from_fn(at.rows(), y.cols(), |r, k| {
        ym[k] + (0..p).map(|i| (at[(r, i)] - mm[i]) * w[i][k]).sum::<f64>()
    })
}
