use serde::{Deserialize, Serialize};

use crate::cbm::{fit_linear_gaussian, fit_regular_linear};
use crate::error::{Error, Result};
use crate::eval::parallel::run_cells;
use crate::numkit::{derive_seed, pearson, Matrix};
use crate::synthgen::{generate, Design, Split, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regular,
    Debiased,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::Regular, Method::Debiased];

    pub fn name(self) -> &'static str {
        match self {
            Method::Regular => "regular",
            Method::Debiased => "debiased",
        }
    }
}

/// Per-concept Pearson correlation between prediction and truth columns,
/// averaged over the concepts where it is defined.
pub fn concept_truth_correlation(predicted: &Matrix, truth: &Matrix) -> Result<f64> {
    if predicted.shape() != truth.shape() {
        return Err(Error::shape(
            "concept_truth_correlation",
            format!("{:?} vs {:?}", predicted.shape(), truth.shape()),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..truth.cols() {
        match pearson(&predicted.column(j), &truth.column(j)) {
            Ok(r) => {
                total += r;
                count += 1;
            }
            Err(Error::UndefinedCorrelation(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Err(Error::UndefinedCorrelation(
            "every concept column is constant",
        ));
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub n: usize,
    pub replicate: usize,
    /// Seed the data set of this cell was generated from.
    pub seed: u64,
    pub method: Method,
    /// `None` when the cell failed; see `error`.
    pub correlation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub n: usize,
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation (zero for a single replicate).
    pub std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub design: Design,
    pub sample_sizes: Vec<usize>,
    pub records: Vec<ScalingRecord>,
}

impl ScalingResult {
    pub fn failures(&self) -> impl Iterator<Item = &ScalingRecord> {
        self.records.iter().filter(|r| r.correlation.is_none())
    }

    /// Mean and spread per `(n, method)` over successful replicates.
    pub fn summary(&self) -> Vec<ScalingSummary> {
        let mut out = Vec::new();
        for &n in &self.sample_sizes {
            for method in Method::BOTH {
                let vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.n == n && r.method == method)
                    .filter_map(|r| r.correlation)
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let k = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / k;
                let std = if vals.len() > 1 {
                    (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
                } else {
                    0.0
                };
                out.push(ScalingSummary {
                    n,
                    method,
                    mean,
                    std,
                    count: vals.len(),
                });
            }
        }
        out
    }

    pub fn mean(&self, n: usize, method: Method) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.n == n && s.method == method)
            .map(|s| s.mean)
    }
}

/// Seed of the data set for replicate `r` at sample size `n`.
pub fn scaling_cell_seed(master: u64, n: usize, replicate: usize) -> u64 {
    derive_seed(master, &format!("scaling/n={n}/replicate={replicate}"))
}

fn run_cell(base: &SynthConfig, n: usize, seed: u64) -> Result<[f64; 2]> {
    let data = generate(&SynthConfig {
        n,
        seed,
        num_classes: None,
        ..base.clone()
    })?;
    let split = Split::by_index(n);
    let x = data.x.select_rows(&split.train);
    let c = data.c.select_rows(&split.train);
    let y = data.y.select_rows(&split.train);
    let x_test = data.x.select_rows(&split.test);
    let truth = data.d_true.select_rows(&split.test);
    let regular = fit_regular_linear(&x, &c, &y)?;
    let debiased = fit_linear_gaussian(&x, &c, &y)?;
    Ok([
        concept_truth_correlation(&regular.concept_means(&x_test)?, &truth)?,
        concept_truth_correlation(&debiased.concept_means(&x_test)?, &truth)?,
    ])
}

/// Correlation-to-truth of the regular and debiased linear pipelines over a
/// grid of sample sizes and replicates. Each cell generates its own data
/// set from `scaling_cell_seed(base.seed, n, r)`, fits both pipelines on the
/// training split and scores concept predictions against the noiseless
/// concepts on the test split. Failing cells are kept with an error note.
pub fn scaling_experiment(
    base: &SynthConfig,
    sample_sizes: &[usize],
    replicates: usize,
    jobs: usize,
) -> Result<ScalingResult> {
    if sample_sizes.is_empty() || replicates == 0 {
        return Err(Error::Config(
            "need at least one sample size and one replicate".into(),
        ));
    }
    if sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sample sizes must be strictly ascending".into(),
        ));
    }
    let cells: Vec<(usize, usize)> = sample_sizes
        .iter()
        .flat_map(|&n| (0..replicates).map(move |r| (n, r)))
        .collect();
    let outcomes = run_cells(jobs, &cells, |&(n, r)| {
        run_cell(base, n, scaling_cell_seed(base.seed, n, r))
    })?;
    let mut records = Vec::with_capacity(cells.len() * 2);
    for (&(n, r), outcome) in cells.iter().zip(outcomes) {
        let seed = scaling_cell_seed(base.seed, n, r);
        for (i, method) in Method::BOTH.into_iter().enumerate() {
            let (correlation, error) = match &outcome {
                Ok(v) => (Some(v[i]), None),
                Err(e) => (None, Some(e.to_string())),
            };
            records.push(ScalingRecord {
                n,
                replicate: r,
                seed,
                method,
                correlation,
                error,
            });
        }
    }
    Ok(ScalingResult {
        design: base.design,
        sample_sizes: sample_sizes.to_vec(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_affine_predictions_score_one() {
        let t = Matrix::from_fn(6, 2, |r, c| ((r * 5 + c * 3) % 7) as f64);
        assert!((concept_truth_correlation(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let a = t.map(|v| 3.0 * v - 2.0);
        assert!((concept_truth_correlation(&a, &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_columns_are_skipped() {
        let truth = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let pred = Matrix::from_rows(&[[1.0, 0.0], [2.0, 1.0], [3.0, 0.0]]).unwrap();
        assert!((concept_truth_correlation(&pred, &truth).unwrap() - 1.0).abs() < 1e-15);
        let flat = Matrix::filled(3, 2, 1.0);
        assert!(matches!(
            concept_truth_correlation(&flat, &flat),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn single_cell_grid_has_two_records() {
        let base = SynthConfig {
            dim: 6,
            seed: 1,
            ..Default::default()
        };
        let res = scaling_experiment(&base, &[100], 1, 1).unwrap();
        assert_eq!(res.records.len(), 2);
        assert_eq!(res.failures().count(), 0);
    }

    #[test]
    fn unordered_sizes_rejected() {
        let base = SynthConfig::default();
        assert!(scaling_experiment(&base, &[1000, 100], 1, 1).is_err());
        assert!(scaling_experiment(&base, &[100], 0, 1).is_err());
    }
}
