//! Synthetic-world checks against independent computations: exhaustive
//! enumeration for composition validity, the pair oracle on sampled pairs,
//! and empirical manifestation frequencies.

mod common;

use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{
    build_world, manifest, oracle_pair_score, sample_datasets, syntax_validity, ConceptWorld,
    DatasetSizes, Modality, SlotPolicy, UnitSet, WorldConfig,
};

#[test]
fn syntax_validity_matches_enumeration() {
    let mut worst = 0.0f64;
    for seed in 0..12u64 {
        let world = common::tiny_world(seed);
        let mut rng = rng_fork(seed, "sets");
        for _ in 0..8 {
            let m = if rng.bernoulli(0.5) { Modality::One } else { Modality::Two };
            let vocab = world.vocab(m);
            let pick = |rng: &mut mmlang::numkernel::RngStream| {
                UnitSet::new(m, (0..vocab).filter(|_| rng.bernoulli(0.3)).collect::<Vec<_>>())
            };
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let closed = syntax_validity(&world, &a, &b).unwrap();
            let brute = common::enumerate_validity(&world, &a, &b);
            worst = worst.max((closed - brute).abs());
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn every_sampled_pair_shares_its_concepts() {
    for config in [WorldConfig::default(), WorldConfig::fusion(), WorldConfig::compact()] {
        let world = build_world(&config, &rng_fork(1, "world")).unwrap();
        let data = sample_datasets(&world, DatasetSizes { n1: 0, n2: 0, n3: 500 }, &rng_fork(1, "data")).unwrap();
        for p in &data.d3 {
            assert_eq!(oracle_pair_score(&p.x1, &p.x2).unwrap(), 1.0);
        }
    }
}

fn frequency_deviation(world: &ConceptWorld, draws: usize) -> f64 {
    let mut worst = 0.0f64;
    for m in [Modality::One, Modality::Two] {
        for c in 0..world.num_concepts {
            let mut rng = rng_fork(c as u64, &format!("freq/{m}"));
            let mut counts = vec![0usize; world.vocab(m)];
            for _ in 0..draws {
                counts[manifest(world, c, m, &mut rng).unwrap()] += 1;
            }
            for e in &world.modality(m).supports[c] {
                worst = worst.max((counts[e.unit] as f64 / draws as f64 - e.prob).abs());
            }
        }
    }
    worst
}

#[test]
fn manifestation_frequencies_match_declared() {
    let world = build_world(&WorldConfig::default(), &rng_fork(0, "world")).unwrap();
    let dev = frequency_deviation(&world, 10_000);
    assert!(dev <= 0.02, "{dev}");
}

#[test]
fn overlapping_supports_still_normalized() {
    let config = WorldConfig { support_overlap: 0.5, slot_policy: SlotPolicy::Partition, ..WorldConfig::default() };
    let world = build_world(&config, &rng_fork(2, "world")).unwrap();
    for m in [Modality::One, Modality::Two] {
        for s in &world.modality(m).supports {
            let total: f64 = s.iter().map(|e| e.prob).sum();
            assert!((total - 1.0).abs() <= 1e-9);
        }
    }
    assert!(frequency_deviation(&world, 10_000) <= 0.02);
}
