use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    /// Stable single-byte code used by the model file format.
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// A fully connected layer `y = act(W x + b)` with `W: out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    /// Gradient with respect to the layer input, when requested.
    pub input: Option<Tensor>,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Dimension {
                context: "DenseLayer weights",
                expected: vec![0, 0],
                actual: weights.shape().to_vec(),
            });
        }
        bias.expect_shape("DenseLayer bias", &[weights.rows()])?;
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        DenseLayer {
            weights: Tensor::matrix(output, input, data).expect("sized by construction"),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias
    }

    fn as_batch(&self, x: &Tensor, context: &'static str) -> Result<Tensor> {
        match x.shape() {
            [n] if *n == self.input_size() => Tensor::matrix(1, *n, x.data().to_vec()),
            [_, n] if *n == self.input_size() => Ok(x.clone()),
            other => Err(Error::Dimension {
                context,
                expected: vec![self.output_size(), self.input_size()],
                actual: other.to_vec(),
            }),
        }
    }

    /// Applies the layer to every row of `x` (a vector is treated as one row
    /// and a vector is returned).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.as_batch(x, "dense_forward")?;
        let out = self.forward_batch(&batch);
        if x.shape().len() == 1 {
            Ok(Tensor::from_vec(out.into_data()))
        } else {
            Ok(out)
        }
    }

    pub(crate) fn forward_batch(&self, x: &Tensor) -> Tensor {
        let mut y = matmul_a_bt(x, &self.weights);
        let b = self.bias.data();
        let act = self.activation;
        let cols = y.cols();
        for row in y.data_mut().chunks_exact_mut(cols) {
            for (v, bj) in row.iter_mut().zip(b) {
                *v = act.apply(*v + bj);
            }
        }
        y
    }

    /// Exact gradients of `sum(upstream ⊙ forward(x))`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
        let batch = self.as_batch(x, "dense_backward")?;
        let up = if upstream.shape().len() == 1 {
            Tensor::matrix(1, upstream.len(), upstream.data().to_vec())?
        } else {
            upstream.clone()
        };
        up.expect_shape("dense_backward upstream", &[batch.rows(), self.output_size()])?;
        let out = self.forward_batch(&batch);
        let mut grads = self.backward_batch(&batch, &out, up, true);
        if x.shape().len() == 1 {
            grads.input = grads.input.map(|g| Tensor::from_vec(g.into_data()));
        }
        Ok(grads)
    }

    /// Backward pass given the cached forward output. `upstream` is consumed
    /// and turned into the pre-activation gradient in place.
    pub(crate) fn backward_batch(
        &self,
        x: &Tensor,
        output: &Tensor,
        mut upstream: Tensor,
        want_input_grad: bool,
    ) -> LayerGrads {
        let act = self.activation;
        if act != Activation::Identity {
            for (g, &y) in upstream.data_mut().iter_mut().zip(output.data()) {
                *g *= act.derivative_from_output(y);
            }
        }
        let weights = matmul_at_b(&upstream, x);
        let cols = upstream.cols();
        let mut bias = vec![0.0; cols];
        for row in upstream.data().chunks_exact(cols) {
            for (acc, g) in bias.iter_mut().zip(row) {
                *acc += g;
            }
        }
        let input = want_input_grad.then(|| matmul(&upstream, &self.weights));
        LayerGrads {
            weights,
            bias: Tensor::from_vec(bias),
            input,
        }
    }
}
