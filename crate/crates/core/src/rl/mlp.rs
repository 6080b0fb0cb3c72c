//! Dense feed-forward network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat buffer, layer by layer: the row-major
//! `out x in` weight matrix followed by the `out` biases. Gradients use the
//! same layout, so optimizers and checkpoints treat a network as a slice.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_trace`]: the input followed by
/// the output of every layer.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds at least the input")
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with layer widths `dims` (input first, output last).
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Glorot-uniform weights and zero biases; the output layer's weights are
    /// further scaled by `output_scale`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let layers = dims.len() - 1;
        let mut offset = 0;
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                limit *= output_scale;
            }
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut offset = 0;
        let layers = self.dims.len() - 1;
        for (l, w) in self.dims.windows(2).enumerate() {
            x = self.affine(offset, w[0], w[1], &x, l + 1 < layers);
            offset += w[0] * w[1] + w[1];
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let layers = self.dims.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let next = self.affine(offset, w[0], w[1], &activations[l], l + 1 < layers);
            activations.push(next);
            offset += w[0] * w[1] + w[1];
        }
        Ok(Trace { activations })
    }

    fn affine(&self, offset: usize, fan_in: usize, fan_out: usize, x: &[f64], hidden: bool) -> Vec<f64> {
        let weights = &self.params[offset..offset + fan_in * fan_out];
        let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        weights
            .chunks_exact(fan_in)
            .zip(biases)
            .map(|(row, b)| {
                let z = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                if hidden { z.tanh() } else { z }
            })
            .collect()
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`
    /// for the pass recorded in `trace`.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer shape");
        assert_eq!(d_output.len(), self.output_dim(), "output gradient shape");
        let layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.dims.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut upstream = d_output.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let out = &trace.activations[l + 1];
            let input = &trace.activations[l];
            let d_pre: Vec<f64> = if l + 1 < layers {
                upstream.iter().zip(out).map(|(g, a)| g * (1.0 - a * a)).collect()
            } else {
                upstream
            };
            let base = offsets[l];
            let weights = &self.params[base..base + fan_in * fan_out];
            let (d_w, d_b) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for ((row, db), &d) in d_w.chunks_exact_mut(fan_in).zip(d_b.iter_mut()).zip(&d_pre) {
                *db += d;
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; fan_in];
                for (row, &d) in weights.chunks_exact(fan_in).zip(&d_pre) {
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                upstream = next;
            } else {
                upstream = Vec::new();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line re-implementation: explicit per-layer matrices.
    fn reference_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let dims = net.dims();
        let p = net.params();
        let mut x = input.to_vec();
        let mut k = 0;
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let mut w = vec![vec![0.0; n_in]; n_out];
            for row in w.iter_mut() {
                for v in row.iter_mut() {
                    *v = p[k];
                    k += 1;
                }
            }
            let b: Vec<f64> = p[k..k + n_out].to_vec();
            k += n_out;
            let mut y = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = b[o];
                for i in 0..n_in {
                    acc += w[o][i] * x[i];
                }
                y[o] = if l + 2 < dims.len() { acc.tanh() } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut net = Mlp::zeros(&[3, 2]).unwrap();
        net.params_mut()[6] = 0.5;
        net.params_mut()[7] = -1.5;
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn tanh_hidden_maps_zero_to_zero() {
        let net = Mlp::from_params(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn matches_reference_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dims in [vec![4, 7, 5, 3], vec![2, 1], vec![6, 16, 16, 9]] {
            let net = Mlp::init(&dims, 1.0, &mut rng).unwrap();
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = net.forward(&x).unwrap();
            let slow = reference_forward(&net, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(net.forward_trace(&x).unwrap().output(), fast.as_slice());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(Mlp::from_params(&[3, 2], vec![0.0; 3]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::init(&[3, 5, 4, 2], 1.0, &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1];
        let weights = [0.4, -1.3];
        let loss = |n: &Mlp| -> f64 {
            n.forward(&x).unwrap().iter().zip(&weights).map(|(o, w)| o * w).sum()
        };
        let trace = net.forward_trace(&x).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&trace, &weights, &mut grad);
        let h = 1e-6;
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - grad[i]).abs() < 1e-8, "param {i}: {numeric} vs {}", grad[i]);
        }
    }
}
