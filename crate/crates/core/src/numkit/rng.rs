//! Seedable random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 keystream keyed by a 64-bit seed. Child
//! streams are keyed by `SHA-256(parent_seed ‖ label)`, so the draws of a
//! child depend only on its path of labels, never on how many values the
//! parent or any sibling has consumed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::lstsq::HouseholderQr;
use super::matrix::Matrix;

/// Derives a reproducible 64-bit seed for `label` under `parent`.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream named `label`. Does not advance `self`.
    pub fn child(&self, label: &str) -> RngStream {
        RngStream::new(derive_seed(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    pub fn fill_normal(&mut self, out: &mut [f64], sigma: f64) {
        for v in out {
            *v = sigma * self.standard_normal();
        }
    }
}

/// `rows × cols` matrix with i.i.d. `N(0, sigma²)` entries.
pub fn random_gaussian(rng: &mut RngStream, rows: usize, cols: usize, sigma: f64) -> Matrix {
    assert!(sigma > 0.0, "sigma must be positive");
    let mut m = Matrix::zeros(rows, cols);
    rng.fill_normal(m.as_mut_slice(), sigma);
    m
}

/// `rows × cols` matrix with i.i.d. `Uniform[lo, hi)` entries.
pub fn random_uniform(rng: &mut RngStream, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.uniform(lo, hi);
    }
    m
}

/// Haar-distributed orthogonal matrix: the Q factor of a Gaussian matrix
/// with column signs fixed so that `diag(R) > 0`.
pub fn random_orthonormal(rng: &mut RngStream, dim: usize) -> Matrix {
    assert!(dim >= 1, "dimension must be at least 1");
    let g = random_gaussian(rng, dim, dim, 1.0);
    let qr = HouseholderQr::factor(&g, false);
    let mut q = qr.q_thin();
    let r_diag = qr.r_diagonal();
    for (c, &d) in r_diag.iter().enumerate() {
        if d < 0.0 {
            for r in 0..dim {
                q[(r, c)] = -q[(r, c)];
            }
        }
    }
    q
}
