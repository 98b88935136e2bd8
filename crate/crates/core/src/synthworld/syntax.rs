//! Closed-form unimodal composition validity.

use std::collections::BTreeSet;

use super::world::{ConceptWorld, Modality};
use crate::error::{Error, Result};

/// A set of atomic units from a single modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSet {
    pub modality: Modality,
    pub units: BTreeSet<usize>,
}

impl UnitSet {
    pub fn new(modality: Modality, units: impl IntoIterator<Item = usize>) -> Self {
        Self {
            modality,
            units: units.into_iter().collect(),
        }
    }
}

/// Probability that the unit emitted at `slot` lies in `set`.
fn slot_mass(world: &ConceptWorld, modality: Modality, slot: usize, set: &BTreeSet<usize>) -> f64 {
    let spec = world.modality(modality);
    let allowed = &world.template[slot];
    let manifested: f64 = allowed
        .iter()
        .map(|&c| {
            spec.supports[c]
                .iter()
                .filter(|e| set.contains(&e.unit))
                .map(|e| e.prob)
                .sum::<f64>()
        })
        .sum::<f64>()
        / allowed.len() as f64;
    let noise = spec.slot_noise[slot];
    (1.0 - noise) * manifested + noise * set.len() as f64 / spec.vocab as f64
}

/// Probability, under the world's generative model, that an instance places
/// a unit of `a` immediately before a unit of `b` at some adjacent slot pair.
///
/// Slots are independent, so the complement ("no adjacent a→b") is tracked by
/// a two-state forward recursion over slots: whether the previous unit lay in `a`.
pub fn syntax_validity(world: &ConceptWorld, a: &UnitSet, b: &UnitSet) -> Result<f64> {
    if a.modality != b.modality {
        return Err(Error::ModalityMismatch {
            expected: a.modality.number(),
            actual: b.modality.number(),
        });
    }
    let modality = a.modality;
    let vocab = world.vocab(modality);
    if let Some(&u) = a.units.iter().chain(&b.units).find(|&&u| u >= vocab) {
        return Err(Error::OutOfVocab {
            unit: u,
            modality: modality.number(),
            vocab,
        });
    }
    let both: BTreeSet<usize> = a.units.intersection(&b.units).copied().collect();

    // (prev in a, no occurrence yet), (prev not in a, no occurrence yet)
    let mut clear_in_a = 0.0f64;
    let mut clear_out_a = 1.0f64;
    for slot in 0..world.num_slots() {
        let pa = slot_mass(world, modality, slot, &a.units);
        let pb = slot_mass(world, modality, slot, &b.units);
        let pab = slot_mass(world, modality, slot, &both);
        let next_in = clear_in_a * (pa - pab) + clear_out_a * pa;
        let next_out = clear_in_a * (1.0 - pa - pb + pab) + clear_out_a * (1.0 - pa);
        clear_in_a = next_in;
        clear_out_a = next_out;
    }
    Ok((1.0 - clear_in_a - clear_out_a).clamp(0.0, 1.0))
}
