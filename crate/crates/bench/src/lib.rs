//! Fixtures shared by the benchmarks.

use debias_cbm::numkit::{random_gaussian, Matrix, RngStream};

pub fn gaussian(seed: u64, rows: usize, cols: usize) -> Matrix {
    random_gaussian(&mut RngStream::new(seed), rows, cols, 1.0)
}
