//! Builds the default concept world, shows how concepts manifest in each
//! modality, and samples the three datasets.

use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{
    build_world, compose_instance_traced, oracle_pair_score, sample_datasets, syntax_validity,
    DatasetSizes, Modality, UnitSet, WorldConfig,
};

fn main() -> mmlang::Result<()> {
    let world = build_world(&WorldConfig::default(), &rng_fork(0, "world"))?;
    println!(
        "{} concepts, vocabularies {}/{}, {} slots, {} classes in {} clusters",
        world.num_concepts,
        world.vocab(Modality::One),
        world.vocab(Modality::Two),
        world.num_slots(),
        world.num_classes,
        world.num_clusters
    );
    for m in [Modality::One, Modality::Two] {
        let support: Vec<usize> = world.modality(m).supports[0].iter().map(|e| e.unit).collect();
        println!("concept 0 in modality {m}: units {support:?}");
    }

    let mut rng = rng_fork(0, "demo");
    let seq = world.sample_sequence(&mut rng);
    let (x1, noisy) = compose_instance_traced(&world, &seq, Modality::One, &mut rng)?;
    let x2 = mmlang::synthworld::compose_instance(&world, &seq, Modality::Two, &mut rng)?;
    println!(
        "sequence {seq:?} (class {}) -> modality 1 {:?} (noise {noisy:?}), modality 2 {:?}, oracle score {}",
        world.label_of(&seq)?,
        x1.units,
        x2.units,
        oracle_pair_score(&x1, &x2)?
    );

    let a = UnitSet::new(Modality::One, world.modality(Modality::One).supports[0].iter().map(|e| e.unit));
    let b = UnitSet::new(Modality::One, world.modality(Modality::One).supports[1].iter().map(|e| e.unit));
    println!("P(concept 0 then concept 1 adjacent) = {:.4}", syntax_validity(&world, &a, &b)?);

    let data = sample_datasets(&world, DatasetSizes::default(), &rng_fork(0, "data"))?;
    println!("sampled |D1|={} |D2|={} |D3|={}", data.d1.len(), data.d2.len(), data.d3.len());
    Ok(())
}
