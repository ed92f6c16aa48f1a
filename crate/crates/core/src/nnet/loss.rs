use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over every output entry.
    #[default]
    Mse,
    /// Mean over samples; targets are (possibly soft) class distributions.
    SoftmaxCrossEntropy,
}

/// Row-wise softmax with the max subtracted first.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Loss {
    pub fn value(self, output: &Matrix, targets: &Matrix) -> Result<f64> {
        check(output, targets)?;
        let n = output.rows() as f64;
        let loss = match self {
            Loss::Mse => {
                let sq: f64 = output
                    .as_slice()
                    .iter()
                    .zip(targets.as_slice())
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum();
                sq / (output.rows() * output.cols()) as f64
            }
            Loss::SoftmaxCrossEntropy => {
                let mut total = 0.0;
                for (o, t) in output.iter_rows().zip(targets.iter_rows()) {
                    let lse = log_sum_exp(o);
                    total += o.iter().zip(t).map(|(ov, tv)| tv * (lse - ov)).sum::<f64>();
                }
                total / n
            }
        };
        Ok(loss)
    }

    /// Loss value and its gradient with respect to `output`.
    pub fn value_and_grad(self, output: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
        let loss = self.value(output, targets)?;
        let grad = match self {
            Loss::Mse => {
                let scale = 2.0 / (output.rows() * output.cols()) as f64;
                let data = output
                    .as_slice()
                    .iter()
                    .zip(targets.as_slice())
                    .map(|(o, t)| scale * (o - t))
                    .collect();
                Matrix::from_vec(output.rows(), output.cols(), data)?
            }
            Loss::SoftmaxCrossEntropy => {
                let n = output.rows() as f64;
                let mut p = softmax_rows(output);
                for r in 0..p.rows() {
                    let t = targets.row(r);
                    let mass: f64 = t.iter().sum();
                    for (pv, tv) in p.row_mut(r).iter_mut().zip(t) {
                        *pv = (*pv * mass - tv) / n;
                    }
                }
                p
            }
        };
        Ok((loss, grad))
    }
}

fn check(output: &Matrix, targets: &Matrix) -> Result<()> {
    if output.shape() != targets.shape() {
        return Err(Error::shape(
            "loss",
            format!(
                "output {:?} vs targets {:?}",
                output.shape(),
                targets.shape()
            ),
        ));
    }
    if output.rows() == 0 {
        return Err(Error::shape("loss", "empty batch"));
    }
    Ok(())
}

/// Fraction of rows whose true class is among the `k` largest outputs.
/// Ties are resolved toward the lower class index.
pub fn top_k_accuracy(scores: &Matrix, ids: &[usize], k: usize) -> Result<f64> {
    if scores.rows() != ids.len() {
        return Err(Error::shape(
            "top_k_accuracy",
            format!("{} score rows for {} labels", scores.rows(), ids.len()),
        ));
    }
    if k == 0 || k > scores.cols() {
        return Err(Error::Config(format!(
            "top_k must lie in 1..={}, got {k}",
            scores.cols()
        )));
    }
    let hits = scores
        .iter_rows()
        .zip(ids)
        .filter(|(row, &truth)| {
            let s = row[truth];
            let better = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > s || (v == s && j < truth))
                .count();
            better < k
        })
        .count();
    Ok(hits as f64 / ids.len() as f64)
}
