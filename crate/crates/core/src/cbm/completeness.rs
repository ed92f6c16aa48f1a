use serde::{Deserialize, Serialize};

use crate::cbm::model::DebiasedCbm;
use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::nnet::{
    top_k_accuracy, train, train_with, Gradients, Loss, MlpModel, MlpSpec, TrainConfig,
};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessMetric {
    R2,
    Accuracy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub metric: CompletenessMetric,
    pub cbm_only_metric: f64,
    pub combined_metric: f64,
    /// `combined_metric − cbm_only_metric`.
    pub completeness_gap: f64,
}

/// `1 − SSE/SST` pooled over all output columns.
pub fn r_squared(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "r_squared",
            format!("{:?} vs {:?}", pred.shape(), truth.shape()),
        ));
    }
    let means = truth.column_means();
    let (mut sse, mut sst) = (0.0, 0.0);
    for (p, t) in pred.iter_rows().zip(truth.iter_rows()) {
        for ((pv, tv), m) in p.iter().zip(t).zip(&means) {
            sse += (tv - pv) * (tv - pv);
            sst += (tv - m) * (tv - m);
        }
    }
    if sst == 0.0 {
        return Err(Error::UndefinedCorrelation("targets have zero variance"));
    }
    Ok(1.0 - sse / sst)
}

/// Measures how much a residual network `q(x)` on the raw features adds on
/// top of the fitted bottleneck.
///
/// `q_hidden` lists the hidden widths of `q`; its output layer starts at
/// zero so `q ≡ 0` before training. Training keeps the parameters that do
/// best on `(eval_x, eval_y)`, where the untrained `q` is a candidate, so the
/// reported gap is never negative. Regression compares R² of `ŷ` and
/// `ŷ + q(x)`; classification compares accuracy of `g`'s logits and
/// `logits + q(x)`.
pub fn measure_completeness(
    cbm: &DebiasedCbm,
    x: &Matrix,
    y: &Labels,
    eval_x: &Matrix,
    eval_y: &Labels,
    q_hidden: &[usize],
    train_config: &TrainConfig,
) -> Result<CompletenessReport> {
    if x.rows() != y.len() || eval_x.rows() != eval_y.len() {
        return Err(Error::shape("measure_completeness", "row counts differ"));
    }
    let width = y.width();
    if eval_y.width() != width {
        return Err(Error::shape("measure_completeness", "label widths differ"));
    }
    let mut sizes = vec![x.cols()];
    sizes.extend(q_hidden);
    sizes.push(width);
    let mut q = MlpModel::new(MlpSpec::new(sizes), train_config.seed)?;
    q.zero_output_layer();

    match (y, eval_y) {
        (Labels::Real(yt), Labels::Real(ye)) => {
            let base_train = cbm.predict(x)?;
            let base_eval = cbm.predict(eval_x)?;
            let resid_train = yt.sub(&base_train)?;
            let resid_eval = ye.sub(&base_eval)?;
            let config = TrainConfig {
                loss: Loss::Mse,
                ..train_config.clone()
            };
            let q = train(q, x, &resid_train, &config, Some((eval_x, &resid_eval)))?.model;
            let combined = base_eval.add(&q.forward(eval_x)?)?;
            let cbm_only = r_squared(&base_eval, ye)?;
            let combined = r_squared(&combined, ye)?;
            Ok(CompletenessReport {
                metric: CompletenessMetric::R2,
                cbm_only_metric: cbm_only,
                combined_metric: combined,
                completeness_gap: combined - cbm_only,
            })
        }
        (Labels::Classes { ids, .. }, Labels::Classes { ids: eval_ids, .. }) => {
            let base_train = cbm.label_logits(x)?;
            let base_eval = cbm.label_logits(eval_x)?;
            let targets = y.to_matrix();
            let loss = Loss::SoftmaxCrossEntropy;
            let step = |m: &MlpModel, idx: &[usize]| -> Result<(f64, Gradients)> {
                let xb = x.select_rows(idx);
                let cache = m.forward_cached(&xb)?;
                let logits = cache.output.add(&base_train.select_rows(idx))?;
                let tb = targets.select_rows(idx);
                let value = loss.value(&logits, &tb)?;
                if !value.is_finite() {
                    return Err(Error::TrainingDiverged {
                        epoch: 0,
                        history: Vec::new(),
                    });
                }
                let (_, grad) = loss.value_and_grad(&logits, &tb)?;
                Ok((value, m.backward_from_output(&cache, &grad)))
            };
            let accuracy = |m: &MlpModel| -> Result<f64> {
                let logits = base_eval.add(&m.forward(eval_x)?)?;
                top_k_accuracy(&logits, eval_ids, 1)
            };
            let check = |m: &MlpModel| Ok(1.0 - accuracy(m)?);
            let q = train_with(q, ids.len(), train_config, step, Some(check))?.model;
            let cbm_only = top_k_accuracy(&base_eval, eval_ids, 1)?;
            let combined = accuracy(&q)?;
            Ok(CompletenessReport {
                metric: CompletenessMetric::Accuracy,
                cbm_only_metric: cbm_only,
                combined_metric: combined,
                completeness_gap: combined - cbm_only,
            })
        }
        _ => Err(Error::Config(
            "training and evaluation labels must be of the same kind".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_by_hand() {
        let t = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let p = Matrix::from_rows(&[[1.0], [2.0], [4.0]]).unwrap();
        // SSE = 1, SST = 2
        assert_eq!(r_squared(&p, &t).unwrap(), 0.5);
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
    }
}
