//! Householder QR (optionally column-pivoted) and ridge least squares.
//!
//! The ridge problem `min ‖Y − XWᵀ − 1bᵀ‖² + λ‖W‖²` is solved by centering
//! the data (which eliminates the unpenalized intercept) and factoring the
//! augmented system `[X_c; √λ·I]`. With `λ = 0` and a rank-deficient
//! design the minimum-norm solution is returned through a complete
//! orthogonal decomposition.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Ridge penalty used by every pipeline regression unless overridden.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;

/// Compact Householder factorization `A·P = Q·R` of an `m × n` matrix.
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    m: usize,
    n: usize,
    /// Column-major working storage: `R` on and above the diagonal, the
    /// Householder vectors (unit leading entry implied) below it.
    a: Vec<f64>,
    tau: Vec<f64>,
    /// `perm[j]` is the original column now in position `j`.
    perm: Vec<usize>,
}

impl HouseholderQr {
    /// Factors `a`. With `pivot`, columns are greedily reordered by
    /// remaining norm so that `|R[k,k]|` is non-increasing.
    pub fn factor(a: &Matrix, pivot: bool) -> Self {
        let (m, n) = a.shape();
        let mut col_major = vec![0.0; m * n];
        for r in 0..m {
            for (c, &v) in a.row(r).iter().enumerate() {
                col_major[c * m + r] = v;
            }
        }
        Self::factor_col_major(m, n, col_major, pivot)
    }

    fn factor_col_major(m: usize, n: usize, mut a: Vec<f64>, pivot: bool) -> Self {
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..n).collect();

        let mut norms: Vec<f64> = Vec::new();
        let mut ref_norms: Vec<f64> = Vec::new();
        if pivot {
            norms = (0..n).map(|j| sq_norm(&a[j * m..(j + 1) * m])).collect();
            ref_norms = norms.clone();
        }

        for k in 0..steps {
            if pivot {
                let (best, _) = norms[k..]
                    .iter()
                    .enumerate()
                    .fold(
                        (0, -1.0),
                        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                    );
                let p = k + best;
                if p != k {
                    for r in 0..m {
                        a.swap(k * m + r, p * m + r);
                    }
                    norms.swap(k, p);
                    ref_norms.swap(k, p);
                    perm.swap(k, p);
                }
            }

            let (head, tail) = a.split_at_mut((k + 1) * m);
            let col = &mut head[k * m + k..(k + 1) * m];
            tau[k] = make_reflector(col);

            if tau[k] != 0.0 {
                let v = &head[k * m + k..(k + 1) * m];
                for j in 0..(n - k - 1) {
                    let target = &mut tail[j * m + k..(j + 1) * m];
                    apply_reflector(v, tau[k], target);
                }
            }

            if pivot {
                for j in (k + 1)..n {
                    let top = a[j * m + k];
                    norms[j] -= top * top;
                    // Recompute when cancellation has eaten most of the digits.
                    if norms[j] <= 1e-8 * ref_norms[j] {
                        norms[j] = if k + 1 < m {
                            sq_norm(&a[j * m + k + 1..(j + 1) * m])
                        } else {
                            0.0
                        };
                        ref_norms[j] = norms[j];
                    }
                }
            }
        }

        Self { m, n, a, tau, perm }
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.m.min(self.n))
            .map(|k| self.a[k * self.m + k])
            .collect()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numerical rank: count of `|R[k,k]|` above `max(m,n)·ε·|R[0,0]|`.
    /// Only meaningful for pivoted factorizations.
    pub fn rank(&self) -> usize {
        let d = self.r_diagonal();
        let Some(first) = d.first() else { return 0 };
        let tol = (self.m.max(self.n) as f64) * f64::EPSILON * first.abs();
        if first.abs() == 0.0 {
            return 0;
        }
        d.iter().take_while(|v| v.abs() > tol).count()
    }

    /// Applies `Qᵀ` to each column of a column-major `m × k` block.
    fn apply_qt(&self, b: &mut [f64]) {
        let m = self.m;
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let v = &self.a[k * m + k..(k + 1) * m];
            for col in b.chunks_exact_mut(m) {
                apply_reflector(v, t, &mut col[k..]);
            }
        }
    }

    /// Thin orthogonal factor `Q` (`m × min(m, n)`).
    pub fn q_thin(&self) -> Matrix {
        let m = self.m;
        let steps = self.m.min(self.n);
        let mut q = vec![0.0; m * steps];
        for j in 0..steps {
            q[j * m + j] = 1.0;
        }
        // Q = H_0 H_1 … H_{s-1}; apply in reverse to the identity columns.
        for k in (0..steps).rev() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            let v = &self.a[k * m + k..(k + 1) * m];
            for col in q.chunks_exact_mut(m) {
                apply_reflector(v, t, &mut col[k..]);
            }
        }
        Matrix::from_fn(m, steps, |r, c| q[c * m + r])
    }

    /// Least-squares solution of `A x = b` for each column of the
    /// column-major `m × k` block `b`. Returns the column-major `n × k`
    /// solution and the rank used. Rank-deficient systems get the
    /// minimum-norm solution.
    fn solve_col_major(&self, mut b: Vec<f64>, k: usize) -> (Vec<f64>, usize) {
        let (m, n) = (self.m, self.n);
        self.apply_qt(&mut b);
        let rank = self.rank();
        let mut x = vec![0.0; n * k];

        if rank == n {
            for c in 0..k {
                let rhs = &b[c * m..c * m + n];
                let sol = &mut x[c * n..(c + 1) * n];
                sol.copy_from_slice(rhs);
                for i in (0..n).rev() {
                    let mut s = sol[i];
                    for j in (i + 1)..n {
                        s -= self.a[j * m + i] * sol[j];
                    }
                    sol[i] = s / self.a[i * m + i];
                }
            }
        } else if rank > 0 {
            // Complete orthogonal decomposition: R[0..r, :]ᵀ = Z·T.
            let mut rt = vec![0.0; n * rank];
            for i in 0..rank {
                for j in i..n {
                    rt[i * n + j] = self.a[j * m + i];
                }
            }
            let z = HouseholderQr::factor_col_major(n, rank, rt, false);
            for c in 0..k {
                // Tᵀ w = (Qᵀb)[0..r]
                let mut w = vec![0.0; n];
                for i in 0..rank {
                    let mut s = b[c * m + i];
                    for j in 0..i {
                        s -= z.a[i * n + j] * w[j];
                    }
                    w[i] = s / z.a[i * n + i];
                }
                // x_perm = Z · [w; 0]
                for kk in (0..rank).rev() {
                    let t = z.tau[kk];
                    if t == 0.0 {
                        continue;
                    }
                    let v = &z.a[kk * n + kk..(kk + 1) * n];
                    apply_reflector(v, t, &mut w[kk..]);
                }
                x[c * n..(c + 1) * n].copy_from_slice(&w);
            }
        }

        // Undo the column permutation.
        let mut out = vec![0.0; n * k];
        for c in 0..k {
            for j in 0..n {
                out[c * n + self.perm[j]] = x[c * n + j];
            }
        }
        (out, rank)
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Turns `x` into `[β, v₁, v₂, …]` where `(I − τ v vᵀ) x = β e₁` and
/// `v₀ = 1`. Returns `τ`.
fn make_reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let tail_sq = sq_norm(&x[1..]);
    if tail_sq == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let scale = 1.0 / (alpha - beta);
    x[1..].iter_mut().for_each(|v| *v *= scale);
    x[0] = beta;
    (beta - alpha) / beta
}

/// `y ← (I − τ v vᵀ) y` with `v[0]` taken as 1.
#[inline]
fn apply_reflector(v: &[f64], tau: f64, y: &mut [f64]) {
    let mut s = y[0];
    for (a, b) in v[1..].iter().zip(&y[1..]) {
        s += a * b;
    }
    let s = tau * s;
    y[0] -= s;
    for (yi, vi) in y[1..].iter_mut().zip(&v[1..]) {
        *yi -= s * vi;
    }
}

/// Fitted affine map `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `out_dim × in_dim`
    pub weights: Matrix,
    pub intercept: Vec<f64>,
    pub ridge_lambda: f64,
    /// Set when `λ = 0` and the design was rank deficient; the weights are
    /// then the minimum-norm solution.
    pub degenerate: bool,
}

impl LinearModel {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_t(&self.weights)?;
        out.add_row_vector(&self.intercept);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub lambda: f64,
    pub fit_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_RIDGE_LAMBDA,
            fit_intercept: true,
        }
    }
}

/// Ridge regression of `y` on `x` with an unpenalized intercept.
pub fn solve_least_squares(x: &Matrix, y: &Matrix, lambda: f64) -> Result<LinearModel> {
    solve_least_squares_with(
        x,
        y,
        RidgeOptions {
            lambda,
            fit_intercept: true,
        },
    )
}

pub fn solve_least_squares_with(x: &Matrix, y: &Matrix, opts: RidgeOptions) -> Result<LinearModel> {
    let (n, p) = x.shape();
    let k = y.cols();
    if y.rows() != n {
        return Err(Error::shape(
            "solve_least_squares",
            format!("X has {n} rows, Y has {}", y.rows()),
        ));
    }
    if n == 0 {
        return Err(Error::shape("solve_least_squares", "no rows"));
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::Config(format!(
            "ridge lambda must be a nonnegative finite number, got {}",
            opts.lambda
        )));
    }

    let (x_mean, y_mean) = if opts.fit_intercept {
        (x.column_means(), y.column_means())
    } else {
        (vec![0.0; p], vec![0.0; k])
    };

    let augmented = opts.lambda > 0.0;
    let m = if augmented { n + p } else { n };
    let mut a = vec![0.0; m * p];
    for (r, row) in x.iter_rows().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            a[c * m + r] = v - x_mean[c];
        }
    }
    if augmented {
        let s = opts.lambda.sqrt();
        for c in 0..p {
            a[c * m + n + c] = s;
        }
    }
    let mut b = vec![0.0; m * k];
    for (r, row) in y.iter_rows().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            b[c * m + r] = v - y_mean[c];
        }
    }

    let qr = HouseholderQr::factor_col_major(m, p, a, true);
    let (sol, rank) = qr.solve_col_major(b, k);

    // sol is column-major p × k, i.e. row-major k × p: exactly Wᵀ's transpose.
    let weights = Matrix::from_vec(k, p, sol)
        .map_err(|e| Error::NonFinite(format!("least-squares solution: {e}")))?;
    let intercept: Vec<f64> = (0..k)
        .map(|o| {
            y_mean[o]
                - weights
                    .row(o)
                    .iter()
                    .zip(&x_mean)
                    .map(|(w, m)| w * m)
                    .sum::<f64>()
        })
        .collect();

    Ok(LinearModel {
        weights,
        intercept,
        ridge_lambda: opts.lambda,
        degenerate: rank < p,
    })
}
