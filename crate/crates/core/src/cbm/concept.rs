use serde::{Deserialize, Serialize};

use crate::cbm::predictor::Predictor;
use crate::error::{Error, Result};
use crate::nnet::{train, Activation, Loss, MlpModel, MlpSpec, TrainConfig};
use crate::numkit::{solve_least_squares, Matrix, RngStream, DEFAULT_RIDGE_LAMBDA};

/// Smallest fitted variance. Kept tiny so that an exact fit reports an
/// essentially zero variance while staying strictly positive.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Probability targets are clamped into this interval before the logit.
pub const LOGIT_CLAMP: (f64, f64) = (0.05, 0.95);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConceptModelKind {
    Linear {
        lambda: f64,
    },
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
        skip: bool,
        train: TrainConfig,
    },
}

impl Default for ConceptModelKind {
    fn default() -> Self {
        ConceptModelKind::Linear {
            lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

/// `p(d|x) = N(mean(x), diag(variance))`.
///
/// In logit mode the Gaussian lives in logit space: the mean model predicts
/// logits of the clamped targets and samples are logits too.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianConceptModel {
    pub mean_model: Predictor,
    pub variance: Vec<f64>,
    pub logit_space: bool,
}

/// `logit(clamp(p, 0.05, 0.95))` entrywise.
pub fn logit_targets(p: &Matrix) -> Matrix {
    let (lo, hi) = LOGIT_CLAMP;
    p.map(|v| {
        let q = v.clamp(lo, hi);
        (q / (1.0 - q)).ln()
    })
}

impl GaussianConceptModel {
    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    /// `E[d|x]` in the space the Gaussian is defined on.
    pub fn mean(&self, x: &Matrix) -> Result<Matrix> {
        self.mean_model.predict(x)
    }

    /// Replaces the variance vector. Zero entries are accepted here and turn
    /// the corresponding concepts deterministic.
    pub fn with_variance(mut self, variance: Vec<f64>) -> Result<Self> {
        if variance.len() != self.dim() {
            return Err(Error::shape(
                "GaussianConceptModel::with_variance",
                format!("{} entries for {} concepts", variance.len(), self.dim()),
            ));
        }
        if variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "variances must be finite and non-negative".into(),
            ));
        }
        self.variance = variance;
        Ok(self)
    }

    pub fn is_deterministic(&self) -> bool {
        self.variance.iter().all(|&v| v == 0.0)
    }

    /// One draw per row of `means`.
    pub fn sample_around(&self, means: &Matrix, rng: &mut RngStream) -> Matrix {
        let sd: Vec<f64> = self.variance.iter().map(|v| v.sqrt()).collect();
        let mut out = means.clone();
        for r in 0..out.rows() {
            for (v, &s) in out.row_mut(r).iter_mut().zip(&sd) {
                *v += s * rng.standard_normal();
            }
        }
        out
    }
}

/// Fits the concept distribution on `(x, d_hat)` pairs. With `logit_space`
/// the targets are treated as probabilities and mapped through
/// [`logit_targets`] first. `validation` is used for early stopping of a
/// network mean model.
pub fn fit_concept_distribution(
    x: &Matrix,
    d_hat: &Matrix,
    kind: &ConceptModelKind,
    logit_space: bool,
    validation: Option<(&Matrix, &Matrix)>,
) -> Result<GaussianConceptModel> {
    if x.rows() != d_hat.rows() {
        return Err(Error::shape(
            "fit_concept_distribution",
            format!(
                "{} feature rows for {} concept rows",
                x.rows(),
                d_hat.rows()
            ),
        ));
    }
    let transform = |m: &Matrix| {
        if logit_space {
            logit_targets(m)
        } else {
            m.clone()
        }
    };
    let targets = transform(d_hat);
    let mean_model = match kind {
        ConceptModelKind::Linear { lambda } => {
            Predictor::Linear(solve_least_squares(x, &targets, *lambda)?)
        }
        ConceptModelKind::Mlp {
            hidden,
            activation,
            skip,
            train: config,
        } => {
            let mut sizes = vec![x.cols()];
            sizes.extend(hidden);
            sizes.push(targets.cols());
            let spec = MlpSpec::new(sizes)
                .with_activation(*activation)
                .with_skip(*skip);
            let config = TrainConfig {
                loss: Loss::Mse,
                ..config.clone()
            };
            let valid = validation.map(|(vx, vd)| (vx, transform(vd)));
            let model = MlpModel::new(spec, config.seed)?;
            let outcome = train(
                model,
                x,
                &targets,
                &config,
                valid.as_ref().map(|(vx, vt)| (*vx, vt)),
            )?;
            Predictor::Mlp(outcome.model)
        }
    };
    let fitted = mean_model.predict(x)?;
    let n = x.rows() as f64;
    let mut variance = vec![0.0; targets.cols()];
    for (p, t) in fitted.iter_rows().zip(targets.iter_rows()) {
        for ((v, a), b) in variance.iter_mut().zip(p).zip(t) {
            *v += (a - b) * (a - b);
        }
    }
    variance
        .iter_mut()
        .for_each(|v| *v = (*v / n).max(VARIANCE_FLOOR));
    Ok(GaussianConceptModel {
        mean_model,
        variance,
        logit_space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_clamps_extremes() {
        let p = Matrix::from_rows(&[[0.999, 0.0, 0.5]]).unwrap();
        let l = logit_targets(&p);
        assert!((l[(0, 0)] - 19f64.ln()).abs() < 1e-12);
        assert!((l[(0, 1)] + 19f64.ln()).abs() < 1e-12);
        assert_eq!(l[(0, 2)], 0.0);
    }

    #[test]
    fn exact_linear_targets_have_negligible_variance() {
        let x = Matrix::from_fn(30, 2, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let d = Matrix::from_fn(30, 3, |r, c| x[(r, 0)] * (c as f64 + 1.0) - x[(r, 1)] + 0.5);
        let model =
            fit_concept_distribution(&x, &d, &ConceptModelKind::default(), false, None).unwrap();
        assert!(
            model.variance.iter().all(|&v| v > 0.0 && v < 1e-8),
            "{:?}",
            model.variance
        );
    }

    #[test]
    fn zero_variance_sampling_returns_mean() {
        let x = Matrix::from_fn(10, 1, |r, _| r as f64);
        let d = Matrix::from_fn(10, 2, |r, c| (r * (c + 2)) as f64 % 5.0);
        let model = fit_concept_distribution(&x, &d, &ConceptModelKind::default(), false, None)
            .unwrap()
            .with_variance(vec![0.0, 0.0])
            .unwrap();
        let mean = model.mean(&x).unwrap();
        let draw = model.sample_around(&mean, &mut RngStream::new(1));
        assert_eq!(draw, mean);
        assert!(model.is_deterministic());
    }
}
