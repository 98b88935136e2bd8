//! Per-modality encoders: unit embedding lookup, pooling, MLP, then projection
//! onto the unit sphere of the shared space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::mlp::glorot_tensor;
use crate::numkernel::{
    l2_normalize, l2_normalize_backward, mlp_apply, mlp_backprop_into, Activation, MlpParams,
    MlpTape, ParamSet, Real, RngStream, Tensor,
};
use crate::synthworld::{Modality, ModalityInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderDims {
    pub embed: usize,
    pub hidden: usize,
    pub out: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 64,
            out: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Order-invariant mean of unit embeddings.
    #[default]
    Mean,
    /// Scales each unit embedding by a learned per-position gain vector before
    /// the mean, so the pooled vector depends on unit order.
    PositionTagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T: Real = f32> {
    pub modality: Modality,
    /// `[vocab, embed]`
    pub unit_embeddings: Tensor<T>,
    /// `[max_len, embed]` element-wise gains, present only for [`Pooling::PositionTagged`].
    pub position_gains: Option<Tensor<T>>,
    /// `embed -> hidden (tanh) -> out`
    pub mlp: MlpParams<T>,
}

impl<T: Real> ParamSet for EncoderParams<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.unit_embeddings];
        v.extend(self.position_gains.as_ref());
        v.extend(self.mlp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.unit_embeddings];
        v.extend(self.position_gains.as_mut());
        v.extend(self.mlp.tensors_mut());
        v
    }
}

/// Initializes an encoder. Weights and unit embeddings are Glorot-uniform,
/// biases start at zero and position gains at one.
pub fn init_encoder<T: Real>(
    modality: Modality,
    vocab: usize,
    dims: EncoderDims,
    pooling: Pooling,
    max_len: usize,
    rng: &mut RngStream,
) -> Result<EncoderParams<T>> {
    if vocab == 0 || dims.embed == 0 || dims.hidden == 0 || dims.out == 0 {
        return Err(Error::InvalidConfig(format!(
            "encoder dimensions must be positive (vocab {vocab}, {dims:?})"
        )));
    }
    let unit_embeddings = glorot_tensor(vocab, dims.embed, rng);
    let position_gains = match pooling {
        Pooling::Mean => None,
        Pooling::PositionTagged => {
            if max_len == 0 {
                return Err(Error::InvalidConfig("position tags need max_len > 0".into()));
            }
            let mut gains = Tensor::zeros(vec![max_len, dims.embed]);
            gains.fill(T::one());
            Some(gains)
        }
    };
    let mlp = MlpParams::init(
        &[dims.embed, dims.hidden, dims.out],
        &[Activation::Tanh, Activation::Identity],
        rng,
    )?;
    Ok(EncoderParams {
        modality,
        unit_embeddings,
        position_gains,
        mlp,
    })
}

impl<T: Real> EncoderParams<T> {
    pub fn vocab(&self) -> usize {
        self.unit_embeddings.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.unit_embeddings.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn pooling(&self) -> Pooling {
        if self.position_gains.is_some() {
            Pooling::PositionTagged
        } else {
            Pooling::Mean
        }
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams {
            modality: self.modality,
            unit_embeddings: self.unit_embeddings.cast(),
            position_gains: self.position_gains.as_ref().map(Tensor::cast),
            mlp: self.mlp.cast(),
        }
    }

    fn check_instance(&self, x: &ModalityInstance) -> Result<()> {
        if x.modality != self.modality {
            return Err(Error::ModalityMismatch {
                expected: self.modality.number(),
                actual: x.modality.number(),
            });
        }
        if x.units.is_empty() {
            return Err(Error::Empty("instance units"));
        }
        if let Some(&u) = x.units.iter().find(|&&u| u >= self.vocab()) {
            return Err(Error::OutOfVocab {
                unit: u,
                modality: self.modality.number(),
                vocab: self.vocab(),
            });
        }
        if let Some(pos) = &self.position_gains {
            if x.units.len() > pos.rows() {
                return Err(Error::DimensionMismatch {
                    context: "instance length vs position tags",
                    expected: pos.rows(),
                    actual: x.units.len(),
                });
            }
        }
        Ok(())
    }
}

/// Forward record for [`encode_backward`].
#[derive(Debug, Clone)]
pub struct EncodeTape<T: Real = f32> {
    mlp: MlpTape<T>,
    unit: Vec<T>,
    norm: f64,
}

pub fn encode_with_tape<T: Real>(
    params: &EncoderParams<T>,
    x: &ModalityInstance,
) -> Result<(Vec<T>, EncodeTape<T>)> {
    params.check_instance(x)?;
    let d = params.embed_dim();
    let mut pooled = vec![0.0f64; d];
    for (pos, &u) in x.units.iter().enumerate() {
        let row = params.unit_embeddings.row(u);
        match &params.position_gains {
            None => {
                for (acc, v) in pooled.iter_mut().zip(row) {
                    *acc += v.widen();
                }
            }
            Some(gains) => {
                for ((acc, v), g) in pooled.iter_mut().zip(row).zip(gains.row(pos)) {
                    *acc += v.widen() * g.widen();
                }
            }
        }
    }
    let n = x.units.len() as f64;
    let pooled: Vec<T> = pooled.into_iter().map(|v| T::narrow(v / n)).collect();
    let (hidden, mlp) = mlp_apply(&params.mlp, &pooled)?;
    let (unit, norm) = l2_normalize(&hidden)?;
    Ok((unit.clone(), EncodeTape { mlp, unit, norm }))
}

/// Unit-norm embedding of `x` in the shared space.
pub fn encode<T: Real>(params: &EncoderParams<T>, x: &ModalityInstance) -> Result<Vec<T>> {
    encode_with_tape(params, x).map(|(e, _)| e)
}

/// Accumulates into `grads` the gradient of `embedding · grad` with respect
/// to every encoder parameter.
pub fn encode_backward<T: Real>(
    params: &EncoderParams<T>,
    x: &ModalityInstance,
    tape: &EncodeTape<T>,
    grad: &[T],
    grads: &mut EncoderParams<T>,
) -> Result<()> {
    let g_hidden = l2_normalize_backward(&tape.unit, tape.norm, grad);
    let g_pooled = mlp_backprop_into(&params.mlp, &tape.mlp, &g_hidden, &mut grads.mlp)?;
    let n = T::narrow(x.units.len() as f64);
    let share: Vec<T> = g_pooled.iter().map(|&g| g / n).collect();
    for (pos, &u) in x.units.iter().enumerate() {
        match &params.position_gains {
            None => {
                for (acc, &g) in grads.unit_embeddings.row_mut(u).iter_mut().zip(&share) {
                    *acc = *acc + g;
                }
            }
            Some(gains) => {
                let gain = gains.row(pos);
                let emb = params.unit_embeddings.row(u);
                for ((acc, &g), &k) in grads.unit_embeddings.row_mut(u).iter_mut().zip(&share).zip(gain) {
                    *acc = *acc + g * k;
                }
                let gg = grads.position_gains.as_mut().expect("gain grads");
                for ((acc, &g), &e) in gg.row_mut(pos).iter_mut().zip(&share).zip(emb) {
                    *acc = *acc + g * e;
                }
            }
        }
    }
    Ok(())
}
