//! Generative multimodal world: latent concepts manifested stochastically
//! into two unit vocabularies, composed by a slot template, labeled and paired.

pub mod dataset;
pub mod syntax;
pub mod world;

pub use dataset::{
    sample_datasets, sample_datasets_with, sample_labeled, sample_pairs, DatasetSizes,
    DatasetTriple, LabelSpace, Labeled, Pair,
};
pub use syntax::{syntax_validity, UnitSet};
pub use world::{
    build_world, compose_instance, compose_instance_traced, manifest, oracle_pair_score,
    ConceptWorld, Emission, LabelMap, Modality, ModalityInstance, ModalitySpec, SlotPolicy,
    WorldConfig, WORLD_FORMAT_VERSION,
};
