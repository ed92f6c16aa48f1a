use crate::error::Result;
use crate::nnet::loss::Loss;
use crate::nnet::model::{MlpModel, MlpSpec};
use crate::nnet::train::backward;
use crate::numkit::{finite_diff_gradient, max_relative_error, random_gaussian, Matrix, RngStream};

/// Step used for the central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor for relative errors of near-zero gradient entries.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares backpropagated gradients against central differences on a
/// randomly initialised network and random batch; returns the maximum
/// relative error over all parameters.
pub fn gradient_check(spec: &MlpSpec, loss: Loss, samples: usize, seed: u64) -> Result<f64> {
    let root = RngStream::new(seed);
    let mut model = MlpModel::new(spec.clone(), root.child("model").seed())?;
    // Non-zero biases so their gradients are exercised away from the origin.
    let mut bias_rng = root.child("bias");
    for l in 0..spec.depth() {
        for b in model.layer_bias_mut(l) {
            *b = 0.1 * bias_rng.standard_normal();
        }
    }
    let x = random_gaussian(&mut root.child("x"), samples, spec.input_size(), 1.0);
    let out = spec.output_size();
    let targets = match loss {
        Loss::Mse => random_gaussian(&mut root.child("targets"), samples, out, 1.0),
        Loss::SoftmaxCrossEntropy => {
            let mut rng = root.child("targets");
            let mut t = Matrix::zeros(samples, out);
            for r in 0..samples {
                t[(r, rng.below(out))] = 1.0;
            }
            t
        }
    };
    let (analytic, _) = backward(&model, &x, &targets, loss)?;
    let mut probe = model.clone();
    let numeric = finite_diff_gradient(
        |p| {
            probe.params.copy_from_slice(p);
            probe
                .forward(&x)
                .and_then(|o| loss.value(&o, &targets))
                .unwrap_or(f64::NAN)
        },
        &model.params,
        GRADCHECK_STEP,
    )?;
    Ok(max_relative_error(&analytic.0, &numeric, GRADCHECK_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Activation;

    #[test]
    fn reference_network_passes() {
        for loss in [Loss::Mse, Loss::SoftmaxCrossEntropy] {
            let spec = MlpSpec::new(vec![5, 10, 4, 3]);
            let err = gradient_check(&spec, loss, 8, 17).unwrap();
            assert!(err < 1e-4, "{loss:?}: {err}");
        }
    }

    #[test]
    fn tanh_with_skip_passes() {
        let spec = MlpSpec::new(vec![3, 7, 2])
            .with_activation(Activation::Tanh)
            .with_skip(true);
        let err = gradient_check(&spec, Loss::SoftmaxCrossEntropy, 6, 3).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
