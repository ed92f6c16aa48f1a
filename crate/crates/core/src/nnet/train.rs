use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::loss::Loss;
use crate::nnet::model::{Gradients, MlpModel};
use crate::numkit::{Matrix, RngStream};

pub const DEFAULT_PATIENCE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
    /// Early-stopping patience in epochs; only used with validation data.
    pub patience: Option<usize>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            loss: Loss::Mse,
            patience: Some(DEFAULT_PATIENCE),
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it turns Adam into the identity, which tests rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a finite non-negative number".into(),
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One Adam update with bias correction.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, config: &TrainConfig) -> Result<()> {
    if grads.0.len() != model.params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                model.params.len()
            ),
        ));
    }
    let state = &mut model.adam;
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for (((p, m), v), &g) in model
        .params
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .zip(&grads.0)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

/// Analytic gradient of the mean batch loss.
pub fn backward(
    model: &MlpModel,
    x: &Matrix,
    targets: &Matrix,
    loss: Loss,
) -> Result<(Gradients, f64)> {
    let cache = model.forward_cached(x)?;
    let value = loss.value(&cache.output, targets)?;
    if !value.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            history: Vec::new(),
        });
    }
    let (_, grad_out) = loss.value_and_grad(&cache.output, targets)?;
    Ok((model.backward_from_output(&cache, &grad_out), value))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss per completed epoch.
    pub history: Vec<f64>,
    /// Validation loss per epoch, preceded by the value before training.
    pub validation_history: Vec<f64>,
    /// Epoch whose parameters were kept (0 means the initial parameters).
    pub best_epoch: Option<usize>,
}

/// Mini-batch Adam driver.
///
/// `step` returns the mean loss and gradients for a batch of sample indices.
/// When `validate` is given, the parameters with the lowest validation loss
/// (including the starting point) are returned and training stops after
/// `patience` epochs without improvement.
pub fn train_with<F, V>(
    mut model: MlpModel,
    n: usize,
    config: &TrainConfig,
    mut step: F,
    mut validate: Option<V>,
) -> Result<TrainOutcome>
where
    F: FnMut(&MlpModel, &[usize]) -> Result<(f64, Gradients)>,
    V: FnMut(&MlpModel) -> Result<f64>,
{
    config.validate()?;
    if n == 0 {
        return Err(Error::shape("train", "no training samples"));
    }
    let mut rng = RngStream::new(config.seed).child("shuffle");
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut validation_history = Vec::new();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    if let Some(v) = validate.as_mut() {
        let v0 = v(&model)?;
        validation_history.push(v0);
        best = Some((v0, 0, model.clone()));
    }

    for epoch in 1..=config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let diverged = |history: &Vec<f64>| Error::TrainingDiverged {
                epoch,
                history: history.clone(),
            };
            let (loss, grads) = match step(&model, batch) {
                Ok(r) => r,
                Err(Error::TrainingDiverged { .. }) => return Err(diverged(&history)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grads.0.iter().any(|g| !g.is_finite()) {
                return Err(diverged(&history));
            }
            adam_step(&mut model, &grads, config)?;
            total += loss * batch.len() as f64;
        }
        history.push(total / n as f64);

        if let Some(v) = validate.as_mut() {
            let value = v(&model)?;
            validation_history.push(value);
            let (best_value, best_epoch, _) = best.as_ref().expect("seeded before the loop");
            if value < *best_value {
                best = Some((value, epoch, model.clone()));
            } else if let Some(p) = config.patience {
                if epoch - best_epoch >= p {
                    break;
                }
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, Some(epoch)),
        None => (model, None),
    };
    Ok(TrainOutcome {
        model,
        history,
        validation_history,
        best_epoch,
    })
}

/// Trains on `(x, targets)` with the loss from `config`, optionally keeping
/// the best parameters on `validation`.
pub fn train(
    model: MlpModel,
    x: &Matrix,
    targets: &Matrix,
    config: &TrainConfig,
    validation: Option<(&Matrix, &Matrix)>,
) -> Result<TrainOutcome> {
    if x.rows() != targets.rows() {
        return Err(Error::shape(
            "train",
            format!("{} inputs for {} targets", x.rows(), targets.rows()),
        ));
    }
    let loss = config.loss;
    let full_batch = config.batch_size >= x.rows() && !config.shuffle;
    let step = |m: &MlpModel, idx: &[usize]| -> Result<(f64, Gradients)> {
        let (g, l) = if full_batch {
            backward(m, x, targets, loss)?
        } else {
            backward(m, &x.select_rows(idx), &targets.select_rows(idx), loss)?
        };
        Ok((l, g))
    };
    match validation {
        Some((vx, vt)) => {
            let check = |m: &MlpModel| loss.value(&m.forward(vx)?, vt);
            train_with(model, x.rows(), config, step, Some(check))
        }
        None => train_with(
            model,
            x.rows(),
            config,
            step,
            None::<fn(&MlpModel) -> Result<f64>>,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{top_k_accuracy, MlpSpec};

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut m = MlpModel::new(MlpSpec::linear(2, 1), 3).unwrap();
        let before = m.params.clone();
        let g = Gradients(vec![1.0; before.len()]);
        adam_step(&mut m, &g, &TrainConfig::default()).unwrap();
        // m_hat = v_hat = 1 at t = 1, so the move is lr / (1 + eps).
        let expect = 1e-3 / (1.0 + 1e-8);
        for (a, b) in m.params.iter().zip(&before) {
            assert!(((b - a) - expect).abs() < 1e-15);
        }
        assert_eq!(m.adam.step, 1);
    }

    #[test]
    fn zero_gradients_and_zero_rate_leave_parameters() {
        let mut m = MlpModel::new(MlpSpec::new(vec![3, 4, 2]), 5).unwrap();
        let before = m.params.clone();
        let zero = Gradients(vec![0.0; before.len()]);
        for _ in 0..50 {
            adam_step(&mut m, &zero, &TrainConfig::default()).unwrap();
        }
        assert_eq!(m.params, before);

        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let g = Gradients((0..before.len()).map(|i| i as f64 - 3.0).collect());
        adam_step(&mut m, &g, &cfg).unwrap();
        assert_eq!(m.params, before);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = MlpModel::new(MlpSpec::new(vec![2, 3, 1]), 9).unwrap();
        let x = Matrix::from_fn(10, 2, |r, c| (r * 2 + c) as f64);
        let y = Matrix::from_fn(10, 1, |r, _| r as f64);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(m.clone(), &x, &y, &cfg, None).unwrap();
        assert_eq!(out.model, m);
        assert!(out.history.is_empty());
    }

    #[test]
    fn learns_doubling_map() {
        let mut rng = RngStream::new(11);
        let x = Matrix::from_fn(200, 1, |_, _| rng.uniform(-1.0, 1.0));
        let y = x.scale(2.0);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 20,
            epochs: 300,
            seed: 1,
            ..Default::default()
        };
        let m = MlpModel::new(MlpSpec::linear(1, 1), 2).unwrap();
        let fit = train(m, &x, &y, &cfg, None).unwrap().model;
        let probe = Matrix::from_rows(&[[-0.7], [0.1], [0.9]]).unwrap();
        let out = fit.forward(&probe).unwrap();
        for (p, o) in probe.as_slice().iter().zip(out.as_slice()) {
            assert!((o - 2.0 * p).abs() < 1e-2, "{o} vs {}", 2.0 * p);
        }
    }

    #[test]
    fn separates_two_blobs() {
        let mut rng = RngStream::new(4);
        let n = 100;
        let ids: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Matrix::from_fn(n, 2, |r, _| {
            let centre = if ids[r] == 0 { -1.0 } else { 1.0 };
            centre + 0.3 * rng.standard_normal()
        });
        let y = Matrix::from_fn(n, 2, |r, c| if ids[r] == c { 1.0 } else { 0.0 });
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            epochs: 200,
            loss: Loss::SoftmaxCrossEntropy,
            seed: 2,
            ..Default::default()
        };
        let m = MlpModel::new(MlpSpec::new(vec![2, 8, 2]), 6).unwrap();
        let fit = train(m, &x, &y, &cfg, None).unwrap().model;
        let acc = top_k_accuracy(&fit.forward(&x).unwrap(), &ids, 1).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn validation_keeps_best_parameters() {
        let x = Matrix::from_fn(20, 1, |r, _| r as f64 / 20.0);
        let y = x.scale(3.0);
        // Validation targets disagree with training, so the initial state or an
        // early epoch should win and training should stop on patience.
        let vy = x.scale(-3.0);
        let cfg = TrainConfig {
            learning_rate: 5e-2,
            epochs: 500,
            batch_size: 20,
            patience: Some(5),
            ..Default::default()
        };
        let m = MlpModel::new(MlpSpec::linear(1, 1), 1).unwrap();
        let out = train(m, &x, &y, &cfg, Some((&x, &vy))).unwrap();
        assert!(out.history.len() < 500);
        let best = out.best_epoch.unwrap();
        let min = out
            .validation_history
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.validation_history[best], min);
        let v = Loss::Mse
            .value(&out.model.forward(&x).unwrap(), &vy)
            .unwrap();
        assert_eq!(v, min);
    }

    #[test]
    fn divergence_is_reported_with_history() {
        let x = Matrix::from_fn(8, 1, |r, _| r as f64);
        let y = Matrix::from_fn(8, 1, |r, _| r as f64);
        let m = MlpModel::new(MlpSpec::linear(1, 1), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 8,
            ..Default::default()
        };
        let mut calls = 0;
        let err = train_with(
            m,
            8,
            &cfg,
            |model: &MlpModel, _idx: &[usize]| {
                calls += 1;
                let (g, l) = backward(model, &x, &y, Loss::Mse)?;
                Ok((if calls == 3 { f64::NAN } else { l }, g))
            },
            None::<fn(&MlpModel) -> Result<f64>>,
        )
        .unwrap_err();
        match err {
            Error::TrainingDiverged { epoch, history } => {
                assert_eq!(epoch, 3);
                assert_eq!(history.len(), 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_config_rejected() {
        let bad = [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}
