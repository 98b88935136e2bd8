use serde::{Deserialize, Serialize};

use crate::decoders::ClassifierParams;
use crate::encoders::{init_encoder, EncoderDims, EncoderParams, Pooling};
use crate::error::{Error, Result};
use crate::numkernel::{rng_fork, ParamSet, Real, Tensor};
use crate::synthworld::{ConceptWorld, Modality};

/// Architecture of a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab1: usize,
    pub vocab2: usize,
    pub max_len: usize,
    pub num_classes: usize,
    pub dims: EncoderDims,
    pub pooling: Pooling,
}

impl ModelShape {
    pub fn for_world(world: &ConceptWorld, dims: EncoderDims, pooling: Pooling) -> Self {
        Self {
            vocab1: world.vocab(Modality::One),
            vocab2: world.vocab(Modality::Two),
            max_len: match pooling {
                Pooling::Mean => 0,
                Pooling::PositionTagged => world.num_slots(),
            },
            num_classes: world.num_classes,
            dims,
            pooling,
        }
    }
}

/// Number of updates applied to each parameter group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub e1: u64,
    pub e2: u64,
    pub phi: u64,
}

/// Encoders for both modalities plus the shared classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real = f32> {
    pub e1: EncoderParams<T>,
    pub e2: EncoderParams<T>,
    pub phi: ClassifierParams<T>,
    pub updates: UpdateCounts,
}

impl<T: Real> ParamSet for Model<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = self.e1.tensors();
        v.extend(self.e2.tensors());
        v.extend(self.phi.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.e1.tensors_mut();
        v.extend(self.e2.tensors_mut());
        v.extend(self.phi.tensors_mut());
        v
    }
}

impl<T: Real> Model<T> {
    /// Fresh model; streams `init/e1`, `init/e2`, `init/phi` of `seed`.
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self> {
        let root = rng_fork(seed, "init");
        let e1 = init_encoder(
            Modality::One,
            shape.vocab1,
            shape.dims,
            shape.pooling,
            shape.max_len,
            &mut root.fork("e1"),
        )?;
        let e2 = init_encoder(
            Modality::Two,
            shape.vocab2,
            shape.dims,
            shape.pooling,
            shape.max_len,
            &mut root.fork("e2"),
        )?;
        let phi = ClassifierParams::init_linear(shape.dims.out, shape.num_classes, &mut root.fork("phi"))?;
        Self::from_parts(e1, e2, phi)
    }

    pub fn from_parts(
        e1: EncoderParams<T>,
        e2: EncoderParams<T>,
        phi: ClassifierParams<T>,
    ) -> Result<Self> {
        if e1.modality != Modality::One || e2.modality != Modality::Two {
            return Err(Error::InvalidConfig("encoders must be for modalities 1 and 2".into()));
        }
        if e1.out_dim() != e2.out_dim() {
            return Err(Error::InvalidConfig(format!(
                "encoder output dimensions differ: {} vs {}",
                e1.out_dim(),
                e2.out_dim()
            )));
        }
        if phi.in_dim() != e1.out_dim() {
            return Err(Error::InvalidConfig(format!(
                "classifier input {} does not match shared dimension {}",
                phi.in_dim(),
                e1.out_dim()
            )));
        }
        Ok(Self {
            e1,
            e2,
            phi,
            updates: UpdateCounts::default(),
        })
    }

    pub fn encoder(&self, m: Modality) -> &EncoderParams<T> {
        match m {
            Modality::One => &self.e1,
            Modality::Two => &self.e2,
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            vocab1: self.e1.vocab(),
            vocab2: self.e2.vocab(),
            max_len: self.e1.position_gains.as_ref().map_or(0, |p| p.rows()),
            num_classes: self.phi.num_classes(),
            dims: EncoderDims {
                embed: self.e1.embed_dim(),
                hidden: self.e1.mlp.layers[0].out_dim(),
                out: self.e1.out_dim(),
            },
            pooling: self.e1.pooling(),
        }
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            e1: self.e1.cast(),
            e2: self.e2.cast(),
            phi: self.phi.cast(),
            updates: self.updates,
        }
    }

    /// Bitwise equality of every parameter, ignoring update counters.
    pub fn same_parameters(&self, other: &Model<T>) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.shape() == y.shape()
                    && x.data()
                        .iter()
                        .zip(y.data())
                        .all(|(p, q)| p.to_bits_eq(q))
            })
    }
}

trait BitEq {
    fn to_bits_eq(&self, other: &Self) -> bool;
}

impl<T: Real> BitEq for T {
    fn to_bits_eq(&self, other: &Self) -> bool {
        self.widen().to_bits() == other.widen().to_bits()
    }
}
