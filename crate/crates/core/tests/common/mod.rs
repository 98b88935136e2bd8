//! Shared helpers for integration tests.
#![allow(dead_code)]

use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{build_world, ConceptWorld, SlotPolicy, UnitSet, WorldConfig};

/// A world small enough to enumerate: at most 5 concepts and 3 slots.
pub fn tiny_world(seed: u64) -> ConceptWorld {
    let mut rng = rng_fork(seed, "tiny-config");
    let num_concepts = 1 + rng.below(5);
    let config = WorldConfig {
        num_concepts,
        vocab1: 4 * num_concepts + rng.below(4),
        vocab2: 4 * num_concepts + rng.below(4),
        num_slots: 1 + rng.below(3),
        num_classes: 2,
        num_clusters: 1,
        support_overlap: if rng.bernoulli(0.5) { 0.5 } else { 0.0 },
        noise_rate: rng.uniform(0.0, 0.3),
        fusion_noise: rng.bernoulli(0.3).then_some(0.4),
        slot_policy: if num_concepts >= 3 && rng.bernoulli(0.5) { SlotPolicy::Partition } else { SlotPolicy::Free },
        ..WorldConfig::default()
    };
    build_world(&config, &rng_fork(seed, "tiny-world")).unwrap()
}

/// Probability of each unit at `slot`, accumulated from the world's tables.
fn unit_distribution(world: &ConceptWorld, set: &UnitSet, slot: usize) -> Vec<f64> {
    let spec = world.modality(set.modality);
    let allowed = &world.template[slot];
    let noise = spec.slot_noise[slot];
    let mut p = vec![noise / spec.vocab as f64; spec.vocab];
    for &c in allowed {
        for e in &spec.supports[c] {
            p[e.unit] += (1.0 - noise) * e.prob / allowed.len() as f64;
        }
    }
    p
}

/// Sums the probability of every unit sequence that places a unit of `a`
/// directly before a unit of `b`, by walking all `vocab^slots` sequences.
pub fn enumerate_validity(world: &ConceptWorld, a: &UnitSet, b: &UnitSet) -> f64 {
    let slots = world.num_slots();
    let vocab = world.vocab(a.modality);
    let dists: Vec<Vec<f64>> = (0..slots).map(|s| unit_distribution(world, a, s)).collect();
    let mut total = 0.0;
    let mut seq = vec![0usize; slots];
    loop {
        let hit = (0..slots.saturating_sub(1)).any(|j| a.units.contains(&seq[j]) && b.units.contains(&seq[j + 1]));
        if hit {
            total += seq.iter().enumerate().map(|(s, &u)| dists[s][u]).product::<f64>();
        }
        let mut pos = 0;
        loop {
            if pos == slots {
                return total;
            }
            seq[pos] += 1;
            if seq[pos] < vocab {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}
