use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use super::tensor::{dot, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `z` and the output `y`.
    #[inline]
    fn derivative<T: Real>(self, z: T, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real = f32> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// A stack of affine layers, each followed by its own activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T: Real = f32> {
    pub layers: Vec<Layer<T>>,
}

/// Intermediate values recorded by [`mlp_apply`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape<T: Real = f32> {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
}

impl<T: Real> MlpTape<T> {
    pub fn output(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn glorot_tensor<T: Real>(
    rows: usize,
    cols: usize,
    rng: &mut RngStream,
) -> Tensor<T> {
    let bound = glorot_bound(cols, rows);
    let data = (0..rows * cols)
        .map(|_| T::narrow(rng.uniform(-bound, bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("finite init")
}

impl<T: Real> MlpParams<T> {
    /// Layer sizes `dims[0] -> dims[1] -> ...`, Glorot-uniform weights and zero
    /// biases. `activations[l]` follows layer `l`.
    pub fn init(dims: &[usize], activations: &[Activation], rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig("mlp needs at least one layer".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!("zero dimension in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                weight: glorot_tensor(w[1], w[0], rng),
                bias: Tensor::zeros(vec![w[1]]),
                activation,
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("mlp layers"));
        }
        for (l, layer) in layers.iter().enumerate() {
            layer.bias.ensure_shape(&[layer.out_dim()])?;
            if l > 0 && layers[l - 1].out_dim() != layer.in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "mlp layer chain",
                    expected: layers[l - 1].out_dim(),
                    actual: layer.in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Tensor::zeros(l.weight.shape().to_vec()),
                    bias: Tensor::zeros(l.bias.shape().to_vec()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

/// Forward pass.
pub fn mlp_apply<T: Real>(params: &MlpParams<T>, input: &[T]) -> Result<(Vec<T>, MlpTape<T>)> {
    if input.len() != params.in_dim() {
        return Err(Error::DimensionMismatch {
            context: "mlp input",
            expected: params.in_dim(),
            actual: input.len(),
        });
    }
    let mut tape = MlpTape {
        inputs: Vec::with_capacity(params.layers.len()),
        pre: Vec::with_capacity(params.layers.len()),
        post: Vec::with_capacity(params.layers.len()),
    };
    let mut current = input.to_vec();
    for layer in &params.layers {
        let z: Vec<T> = (0..layer.out_dim())
            .map(|o| T::narrow(dot(layer.weight.row(o), &current) + layer.bias.data()[o].widen()))
            .collect();
        let y: Vec<T> = z.iter().map(|&v| layer.activation.apply(v)).collect();
        tape.inputs.push(std::mem::replace(&mut current, y.clone()));
        tape.pre.push(z);
        tape.post.push(y);
    }
    Ok((current, tape))
}

/// Reverse pass that accumulates parameter gradients into `grads` and returns
/// the gradient with respect to the network input.
pub fn mlp_backprop_into<T: Real>(
    params: &MlpParams<T>,
    tape: &MlpTape<T>,
    output_grad: &[T],
    grads: &mut MlpParams<T>,
) -> Result<Vec<T>> {
    if tape.pre.len() != params.layers.len() || grads.layers.len() != params.layers.len() {
        return Err(Error::DimensionMismatch {
            context: "mlp tape depth",
            expected: params.layers.len(),
            actual: tape.pre.len(),
        });
    }
    if output_grad.len() != params.out_dim() {
        return Err(Error::DimensionMismatch {
            context: "mlp output grad",
            expected: params.out_dim(),
            actual: output_grad.len(),
        });
    }
    let mut upstream = output_grad.to_vec();
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let (input, pre, post) = (&tape.inputs[l], &tape.pre[l], &tape.post[l]);
        if input.len() != layer.in_dim() || pre.len() != layer.out_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp tape layer",
                expected: layer.in_dim(),
                actual: input.len(),
            });
        }
        let delta: Vec<T> = upstream
            .iter()
            .zip(pre.iter().zip(post))
            .map(|(&g, (&z, &y))| g * layer.activation.derivative(z, y))
            .collect();
        let g = &mut grads.layers[l];
        for (o, &d) in delta.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            for (w, &x) in g.weight.row_mut(o).iter_mut().zip(input) {
                *w = *w + d * x;
            }
            let b = &mut g.bias.data_mut()[o];
            *b = *b + d;
        }
        upstream = (0..layer.in_dim())
            .map(|i| {
                let acc: f64 = delta
                    .iter()
                    .enumerate()
                    .map(|(o, d)| d.widen() * layer.weight.row(o)[i].widen())
                    .sum();
                T::narrow(acc)
            })
            .collect();
    }
    Ok(upstream)
}

/// Exact reverse-mode gradients of `output · output_grad`.
pub fn mlp_backprop<T: Real>(
    params: &MlpParams<T>,
    tape: &MlpTape<T>,
    output_grad: &[T],
) -> Result<(MlpParams<T>, Vec<T>)> {
    let mut grads = params.zeros_like();
    let input_grad = mlp_backprop_into(params, tape, output_grad, &mut grads)?;
    Ok((grads, input_grad))
}
