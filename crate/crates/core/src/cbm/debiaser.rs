use serde::{Deserialize, Serialize};

use crate::cbm::predictor::Predictor;
use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::nnet::{train, Activation, Loss, MlpModel, MlpSpec, TrainConfig};
use crate::numkit::{solve_least_squares, Matrix, DEFAULT_RIDGE_LAMBDA};

/// How the first stage `d̂(y) = E[c|y]` is estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DebiaserKind {
    /// Per-class average of the observed concepts.
    ClassMean,
    /// Ridge regression of concepts on the label representation.
    Linear { lambda: f64 },
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
        train: TrainConfig,
    },
}

impl Default for DebiaserKind {
    fn default() -> Self {
        DebiaserKind::Linear {
            lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DebiaserFit {
    ClassMean {
        /// `num_classes × concepts`; rows of absent classes are zero.
        table: Matrix,
        counts: Vec<usize>,
    },
    Regression {
        model: Predictor,
        /// Per-concept range of the training concepts; predictions are clamped
        /// into it.
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptDebiaser {
    pub fit: DebiaserFit,
}

pub fn fit_debiaser(c: &Matrix, y: &Labels, kind: &DebiaserKind) -> Result<ConceptDebiaser> {
    if c.rows() != y.len() {
        return Err(Error::shape(
            "fit_debiaser",
            format!("{} concept rows for {} labels", c.rows(), y.len()),
        ));
    }
    if c.rows() == 0 {
        return Err(Error::shape("fit_debiaser", "no training rows"));
    }
    let fit = match kind {
        DebiaserKind::ClassMean => {
            let Labels::Classes { ids, num_classes } = y else {
                return Err(Error::Config(
                    "class-mean debiaser needs categorical labels".into(),
                ));
            };
            let mut table = Matrix::zeros(*num_classes, c.cols());
            let mut counts = vec![0usize; *num_classes];
            for (row, &k) in c.iter_rows().zip(ids) {
                counts[k] += 1;
                table
                    .row_mut(k)
                    .iter_mut()
                    .zip(row)
                    .for_each(|(t, v)| *t += v);
            }
            for (k, &count) in counts.iter().enumerate() {
                if count > 0 {
                    table.row_mut(k).iter_mut().for_each(|t| *t /= count as f64);
                }
            }
            DebiaserFit::ClassMean { table, counts }
        }
        DebiaserKind::Linear { lambda } => {
            let model = solve_least_squares(&y.to_matrix(), c, *lambda)?;
            let (lo, hi) = c.column_ranges();
            DebiaserFit::Regression {
                model: Predictor::Linear(model),
                lo,
                hi,
            }
        }
        DebiaserKind::Mlp {
            hidden,
            activation,
            train: config,
        } => {
            let input = y.to_matrix();
            let mut sizes = vec![input.cols()];
            sizes.extend(hidden);
            sizes.push(c.cols());
            let spec = MlpSpec::new(sizes).with_activation(*activation);
            let config = TrainConfig {
                loss: Loss::Mse,
                ..config.clone()
            };
            let model = MlpModel::new(spec, config.seed)?;
            let model = train(model, &input, c, &config, None)?.model;
            let (lo, hi) = c.column_ranges();
            DebiaserFit::Regression {
                model: Predictor::Mlp(model),
                lo,
                hi,
            }
        }
    };
    Ok(ConceptDebiaser { fit })
}

impl ConceptDebiaser {
    pub fn concept_dim(&self) -> usize {
        match &self.fit {
            DebiaserFit::ClassMean { table, .. } => table.cols(),
            DebiaserFit::Regression { lo, .. } => lo.len(),
        }
    }

    /// `d̂(y)` for every row of `y`.
    pub fn predict(&self, y: &Labels) -> Result<Matrix> {
        match &self.fit {
            DebiaserFit::ClassMean { table, counts } => {
                let Labels::Classes { ids, num_classes } = y else {
                    return Err(Error::Config(
                        "class-mean debiaser needs categorical labels".into(),
                    ));
                };
                if *num_classes != counts.len() {
                    return Err(Error::shape(
                        "ConceptDebiaser::predict",
                        format!("{num_classes} classes, table has {}", counts.len()),
                    ));
                }
                let mut out = Matrix::zeros(ids.len(), table.cols());
                for (i, &k) in ids.iter().enumerate() {
                    if counts[k] == 0 {
                        return Err(Error::UnknownClass(k));
                    }
                    out.row_mut(i).copy_from_slice(table.row(k));
                }
                Ok(out)
            }
            DebiaserFit::Regression { model, lo, hi } => {
                let mut out = model.predict(&y.to_matrix())?;
                for r in 0..out.rows() {
                    for ((v, &l), &h) in out.row_mut(r).iter_mut().zip(lo).zip(hi) {
                        *v = v.clamp(l, h);
                    }
                }
                Ok(out)
            }
        }
    }
}
