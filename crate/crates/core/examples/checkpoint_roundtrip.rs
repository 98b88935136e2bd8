//! Trains briefly, saves a checkpoint, reloads it and retrieves with both
//! copies to show they agree exactly.

use mmlang::cli::{load_checkpoint, save_checkpoint, RunConfig};
use mmlang::decoders::retrieve;
use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{build_world, sample_datasets, DatasetSizes};
use mmlang::trainer::run_training;
use mmlang::Model;

fn main() -> mmlang::Result<()> {
    let mut config = RunConfig::default();
    config.train.iterations = 200;
    let world = build_world(&config.world, &rng_fork(config.seed(), "world"))?;
    let data = sample_datasets(&world, DatasetSizes { n1: 500, n2: 500, n3: 500 }, &rng_fork(config.seed(), "data"))?;
    let (model, _) = run_training(&data, Model::init(&config.model_shape(&world), config.seed())?, &config.train_config())?;

    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &config, &path)?;
    let (loaded, header) = load_checkpoint(&path)?;
    println!(
        "{} tensors, fingerprint {}, bit-identical: {}",
        header.manifest.len(),
        header.config_fingerprint,
        loaded.same_parameters(&model)
    );

    let candidates: Vec<_> = data.d3[..50].iter().map(|p| p.x2.clone()).collect();
    let a = retrieve(&model, &data.d3[0].x1, &candidates, 5)?;
    let b = retrieve(&loaded, &data.d3[0].x1, &candidates, 5)?;
    println!("top-5 for pair 0: {:?} (same after reload: {})", a.ordering, a == b);
    Ok(())
}
