use serde::{Deserialize, Serialize};

use super::world::{compose_instance, ConceptWorld, Modality, ModalityInstance};
use crate::error::{Error, Result};
use crate::numkernel::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub instance: ModalityInstance,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub pair_id: u64,
    pub x1: ModalityInstance,
    pub x2: ModalityInstance,
}

/// Labeled modality-1 data, labeled modality-2 data and unlabeled cross-modal pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetTriple {
    pub d1: Vec<Labeled>,
    pub d2: Vec<Labeled>,
    pub d3: Vec<Pair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSizes {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        Self {
            n1: 2000,
            n2: 2000,
            n3: 2000,
        }
    }
}

/// Label space used for a labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    #[default]
    Class,
    /// Coarse labels through the world's cluster map.
    Cluster,
}

/// Samples `n` labeled instances of `modality`. Classes are assigned
/// round-robin over a shuffled order, then a concept sequence is drawn
/// uniformly within the class.
pub fn sample_labeled(
    world: &ConceptWorld,
    modality: Modality,
    n: usize,
    space: LabelSpace,
    rng: &mut RngStream,
) -> Result<Vec<Labeled>> {
    let classes: Vec<usize> = (0..world.num_classes)
        .filter_map(|y| {
            let mut probe = rng.fork(&format!("class-probe:{y}"));
            match world.sample_sequence_of_class(y, &mut probe) {
                Ok(Some(_)) => Some(Ok(y)),
                Ok(None) => None,
                Err(e) => Some(Err(e)),
            }
        })
        .collect::<Result<_>>()?;
    if classes.is_empty() && n > 0 {
        return Err(Error::InsufficientData("world has no populated classes".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut order = classes.clone();
    for i in 0..n {
        if i % classes.len() == 0 {
            rng.shuffle(&mut order);
        }
        let class = order[i % classes.len()];
        let seq = world
            .sample_sequence_of_class(class, rng)?
            .expect("class populated");
        let instance = compose_instance(world, &seq, modality, rng)?;
        let label = match space {
            LabelSpace::Class => class,
            LabelSpace::Cluster => world.cluster_of(class)?,
        };
        out.push(Labeled { instance, label });
    }
    Ok(out)
}

/// `n` pairs, each manifesting one uniformly drawn concept sequence in both modalities.
pub fn sample_pairs(world: &ConceptWorld, n: usize, rng: &mut RngStream) -> Result<Vec<Pair>> {
    (0..n)
        .map(|i| {
            let seq = world.sample_sequence(rng);
            Ok(Pair {
                pair_id: i as u64,
                x1: compose_instance(world, &seq, Modality::One, rng)?,
                x2: compose_instance(world, &seq, Modality::Two, rng)?,
            })
        })
        .collect()
}

/// Samples D1, D2 and D3 from independent forks of `rng`.
pub fn sample_datasets(
    world: &ConceptWorld,
    sizes: DatasetSizes,
    rng: &RngStream,
) -> Result<DatasetTriple> {
    sample_datasets_with(world, sizes, LabelSpace::Class, rng)
}

/// As [`sample_datasets`], with a choice of label space for D2.
pub fn sample_datasets_with(
    world: &ConceptWorld,
    sizes: DatasetSizes,
    d2_space: LabelSpace,
    rng: &RngStream,
) -> Result<DatasetTriple> {
    Ok(DatasetTriple {
        d1: sample_labeled(world, Modality::One, sizes.n1, LabelSpace::Class, &mut rng.fork("d1"))?,
        d2: sample_labeled(world, Modality::Two, sizes.n2, d2_space, &mut rng.fork("d2"))?,
        d3: sample_pairs(world, sizes.n3, &mut rng.fork("d3"))?,
    })
}

impl DatasetTriple {
    pub fn is_empty(&self) -> bool {
        self.d1.is_empty() && self.d2.is_empty() && self.d3.is_empty()
    }

    /// Copy with every latent concept sequence removed.
    pub fn without_latent(&self) -> Self {
        let strip = |v: &[Labeled]| {
            v.iter()
                .map(|l| Labeled {
                    instance: l.instance.without_latent(),
                    label: l.label,
                })
                .collect()
        };
        Self {
            d1: strip(&self.d1),
            d2: strip(&self.d2),
            d3: self
                .d3
                .iter()
                .map(|p| Pair {
                    pair_id: p.pair_id,
                    x1: p.x1.without_latent(),
                    x2: p.x2.without_latent(),
                })
                .collect(),
        }
    }
}
