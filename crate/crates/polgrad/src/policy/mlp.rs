//! Small feed-forward network with tanh hidden layers and a linear output
//! layer, plus exact Jacobians with respect to both the (flattened)
//! parameters and the input, accumulated in reverse mode.
//!
//! Parameters are stored as one flat vector, layer by layer: the weight
//! matrix of each layer in row-major order followed by its bias vector.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Layer-size description of a multilayer perceptron, e.g. `[6, 64, 64, 6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layer_sizes: Vec<usize>,
}

/// Post-activation values of every layer from one forward pass, starting
/// with the raw input. Reused by the backward passes.
#[derive(Debug, Clone)]
pub struct MlpActivations {
    pub layers: Vec<DVector<f64>>,
}

impl MlpActivations {
    pub fn output(&self) -> &DVector<f64> {
        self.layers.last().expect("forward pass stores all layers")
    }
}

impl MlpNetwork {
    /// A network with the given layer sizes (input, hidden..., output).
    pub fn new(layer_sizes: Vec<usize>) -> MlpNetwork {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        assert!(layer_sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        MlpNetwork { layer_sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Total parameter count: `sum((fan_in + 1) * fan_out)` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "mlp parameters",
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, input: &DVector<f64>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Offset of layer `l`'s parameter block within the flat vector.
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes
            .windows(2)
            .take(l)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Weights start at `w(l)`, row-major `(out, in)`; biases follow.
    fn weight(&self, theta: &DVector<f64>, l: usize, row: usize, col: usize) -> f64 {
        let fan_in = self.layer_sizes[l];
        theta[self.layer_offset(l) + row * fan_in + col]
    }

    fn bias(&self, theta: &DVector<f64>, l: usize, row: usize) -> f64 {
        let fan_in = self.layer_sizes[l];
        let fan_out = self.layer_sizes[l + 1];
        theta[self.layer_offset(l) + fan_out * fan_in + row]
    }

    /// Forward pass returning all post-activation layer values.
    pub fn forward_cached(&self, theta: &DVector<f64>, input: &DVector<f64>) -> Result<MlpActivations> {
        self.check_theta(theta)?;
        self.check_input(input)?;
        let num_layers = self.layer_sizes.len() - 1;
        let mut layers = Vec::with_capacity(num_layers + 1);
        layers.push(input.clone());
        for l in 0..num_layers {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let prev = &layers[l];
            let mut z = DVector::zeros(fan_out);
            for i in 0..fan_out {
                let mut acc = self.bias(theta, l, i);
                for j in 0..fan_in {
                    acc += self.weight(theta, l, i, j) * prev[j];
                }
                z[i] = acc;
            }
            if l + 1 < num_layers {
                z.apply(|v| *v = v.tanh());
            }
            layers.push(z);
        }
        Ok(MlpActivations { layers })
    }

    /// Forward pass returning only the output.
    pub fn forward(&self, theta: &DVector<f64>, input: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_cached(theta, input)?.output().clone())
    }

    /// Backward pass for one output component: returns the per-layer deltas
    /// `d y_r / d z_l` (pre-activation sensitivities) down to the input.
    fn backward_deltas(&self, theta: &DVector<f64>, acts: &MlpActivations, out_row: usize) -> Vec<DVector<f64>> {
        let num_layers = self.layer_sizes.len() - 1;
        let mut deltas = vec![DVector::zeros(0); num_layers];
        let mut delta = DVector::zeros(self.output_dim());
        delta[out_row] = 1.0;
        deltas[num_layers - 1] = delta.clone();
        for l in (1..num_layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let mut prev_delta = DVector::zeros(fan_in);
            for j in 0..fan_in {
                let mut acc = 0.0;
                for i in 0..fan_out {
                    acc += self.weight(theta, l, i, j) * delta[i];
                }
                // Hidden activations are tanh; derivative from the cached value.
                let a = acts.layers[l][j];
                prev_delta[j] = acc * (1.0 - a * a);
            }
            deltas[l - 1] = prev_delta.clone();
            delta = prev_delta;
        }
        deltas
    }

    /// Exact Jacobian of the output with respect to the flat parameters,
    /// shape `output_dim x param_count`.
    #[allow(clippy::needless_range_loop)]
    pub fn param_jacobian(&self, theta: &DVector<f64>, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        let acts = self.forward_cached(theta, input)?;
        let p = self.param_count();
        let mut jac = DMatrix::zeros(self.output_dim(), p);
        for r in 0..self.output_dim() {
            let deltas = self.backward_deltas(theta, &acts, r);
            for l in 0..self.layer_sizes.len() - 1 {
                let fan_in = self.layer_sizes[l];
                let fan_out = self.layer_sizes[l + 1];
                let base = self.layer_offset(l);
                let delta = &deltas[l];
                let prev = &acts.layers[l];
                for i in 0..fan_out {
                    for j in 0..fan_in {
                        jac[(r, base + i * fan_in + j)] = delta[i] * prev[j];
                    }
                    jac[(r, base + fan_out * fan_in + i)] = delta[i];
                }
            }
        }
        Ok(jac)
    }

    /// Exact Jacobian of the output with respect to the input, shape
    /// `output_dim x input_dim`.
    pub fn input_jacobian(&self, theta: &DVector<f64>, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        let acts = self.forward_cached(theta, input)?;
        let n_in = self.input_dim();
        let mut jac = DMatrix::zeros(self.output_dim(), n_in);
        for r in 0..self.output_dim() {
            let deltas = self.backward_deltas(theta, &acts, r);
            let delta0 = &deltas[0];
            for j in 0..n_in {
                let mut acc = 0.0;
                for i in 0..self.layer_sizes[1] {
                    acc += self.weight(theta, 0, i, j) * delta0[i];
                }
                jac[(r, j)] = acc;
            }
        }
        Ok(jac)
    }

    /// Initial parameters: hidden weights uniform in `+-1/sqrt(fan_in)`,
    /// hidden biases zero, and the whole output layer zero so the network
    /// starts as the zero map.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let mut theta = DVector::zeros(self.param_count());
        let num_layers = self.layer_sizes.len() - 1;
        for l in 0..num_layers.saturating_sub(1) {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let base = self.layer_offset(l);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for k in 0..fan_out * fan_in {
                theta[base + k] = rng.gen_range(-bound..bound);
            }
        }
        theta
    }
}
