use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::matrix::gemm;
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture of a fully connected network.
///
/// With `skip_input_to_penultimate`, the raw input is concatenated onto the
/// last hidden representation, so the output layer sees
/// `[h_last | x]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub skip_input_to_penultimate: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Self {
        Self {
            layer_sizes,
            activation: Activation::Relu,
            skip_input_to_penultimate: false,
        }
    }

    pub fn linear(input: usize, output: usize) -> Self {
        Self::new(vec![input, output])
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_skip(mut self, skip: bool) -> Self {
        self.skip_input_to_penultimate = skip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be at least 1".into()));
        }
        if self.skip_input_to_penultimate && self.layer_sizes.len() < 3 {
            return Err(Error::Config(
                "skip connection requires a hidden layer".into(),
            ));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated layer sizes")
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layer_in(&self, l: usize) -> usize {
        let base = self.layer_sizes[l];
        if self.skip_input_to_penultimate && l + 1 == self.depth() {
            base + self.layer_sizes[0]
        } else {
            base
        }
    }

    pub fn layer_out(&self, l: usize) -> usize {
        self.layer_sizes[l + 1]
    }

    /// Offsets of `(weights, bias)` for layer `l` in the flat parameter
    /// vector. Weights are `out × in`, row-major.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.layer_out(k) * (self.layer_in(k) + 1);
        }
        (off, off + self.layer_out(l) * self.layer_in(l))
    }

    pub fn param_count(&self) -> usize {
        (0..self.depth())
            .map(|l| self.layer_out(l) * (self.layer_in(l) + 1))
            .sum()
    }
}

/// Adam moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub spec: MlpSpec,
    /// All weights and biases, layer by layer.
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub seed: u64,
}

/// Gradient of a scalar loss with respect to [`MlpModel::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<f64>);

/// Intermediate values kept by [`MlpModel::forward_cached`].
pub struct ForwardCache {
    /// Input of each affine layer (for the last layer this includes the
    /// skip concatenation).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix>,
    pub output: Matrix,
}

impl MlpModel {
    /// Fan-in scaled Gaussian weights (He for ReLU, LeCun for tanh), zero
    /// biases.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = vec![0.0; spec.param_count()];
        let mut rng = RngStream::new(seed).child("init");
        for l in 0..spec.depth() {
            let fan_in = spec.layer_in(l) as f64;
            let gain = match spec.activation {
                Activation::Relu => 2.0,
                Activation::Tanh => 1.0,
            };
            let (w, b) = spec.layer_offsets(l);
            rng.fill_normal(&mut params[w..b], (gain / fan_in).sqrt());
        }
        let adam = AdamState::zeros(params.len());
        Ok(Self {
            spec,
            params,
            adam,
            seed,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.param_count();
        Ok(Self {
            spec,
            params: vec![0.0; n],
            adam: AdamState::zeros(n),
            seed: 0,
        })
    }

    /// Zeroes the output layer so the network starts as the constant 0.
    pub fn zero_output_layer(&mut self) {
        let l = self.spec.depth() - 1;
        let (w, _) = self.spec.layer_offsets(l);
        let end = w + self.spec.layer_out(l) * (self.spec.layer_in(l) + 1);
        self.params[w..end].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn layer_weights(&self, l: usize) -> &[f64] {
        let (w, b) = self.spec.layer_offsets(l);
        &self.params[w..b]
    }

    pub fn layer_weights_mut(&mut self, l: usize) -> &mut [f64] {
        let (w, b) = self.spec.layer_offsets(l);
        &mut self.params[w..b]
    }

    pub fn layer_bias(&self, l: usize) -> &[f64] {
        let (_, b) = self.spec.layer_offsets(l);
        &self.params[b..b + self.spec.layer_out(l)]
    }

    pub fn layer_bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (_, b) = self.spec.layer_offsets(l);
        let out = self.spec.layer_out(l);
        &mut self.params[b..b + out]
    }

    fn affine(&self, l: usize, input: &Matrix) -> Matrix {
        let (n, out, inp) = (input.rows(), self.spec.layer_out(l), self.spec.layer_in(l));
        let mut z = Matrix::zeros(n, out);
        gemm(
            n,
            inp,
            out,
            1.0,
            input.as_slice(),
            false,
            self.layer_weights(l),
            true,
            0.0,
            z.as_mut_slice(),
        );
        z.add_row_vector(self.layer_bias(l));
        z
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_size() {
            return Err(Error::shape(
                "MlpModel::forward",
                format!(
                    "input has {} columns, network expects {}",
                    x.cols(),
                    self.spec.input_size()
                ),
            ));
        }
        Ok(())
    }

    /// Pre-loss outputs (logits for classification), `n × output`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let depth = self.spec.depth();
        let act = self.spec.activation;
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut h = x.clone();
        for l in 0..depth {
            let input = if self.spec.skip_input_to_penultimate && l + 1 == depth {
                h.hstack(x)?
            } else {
                h
            };
            let z = self.affine(l, &input);
            inputs.push(input);
            if l + 1 == depth {
                return Ok(ForwardCache {
                    inputs,
                    pre,
                    output: z,
                });
            }
            h = z.map(|v| act.apply(v));
            pre.push(z);
        }
        unreachable!("depth >= 1")
    }

    /// Backpropagates `d loss / d output` through a cached forward pass.
    pub fn backward_from_output(&self, cache: &ForwardCache, grad_out: &Matrix) -> Gradients {
        let depth = self.spec.depth();
        let act = self.spec.activation;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        for l in (0..depth).rev() {
            let input = &cache.inputs[l];
            let (n, out, inp) = (input.rows(), self.spec.layer_out(l), self.spec.layer_in(l));
            let (w_off, b_off) = self.spec.layer_offsets(l);
            // dW = deltaᵀ · input
            gemm(
                out,
                n,
                inp,
                1.0,
                delta.as_slice(),
                true,
                input.as_slice(),
                false,
                0.0,
                &mut grads[w_off..b_off],
            );
            let db = &mut grads[b_off..b_off + out];
            for row in delta.iter_rows() {
                db.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            if l == 0 {
                break;
            }
            // d input = delta · W, keeping only the hidden part of a skip input.
            let mut d_in = Matrix::zeros(n, inp);
            gemm(
                n,
                out,
                inp,
                1.0,
                delta.as_slice(),
                false,
                self.layer_weights(l),
                false,
                0.0,
                d_in.as_mut_slice(),
            );
            let hidden = self.spec.layer_sizes[l];
            let pre = &cache.pre[l - 1];
            let mut next = Matrix::zeros(n, hidden);
            for r in 0..n {
                let src = &d_in.row(r)[..hidden];
                let z = pre.row(r);
                for ((dst, &g), &zv) in next.row_mut(r).iter_mut().zip(src).zip(z) {
                    *dst = g * act.derivative(zv);
                }
            }
            delta = next;
        }
        Gradients(grads)
    }
}
