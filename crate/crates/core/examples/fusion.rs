//! Joint training on the asymmetric-noise world against separately trained
//! unimodal classifiers.
//!
//! cargo run --release --example fusion -- [seeds]

use mmlang::evalharness::{run_fusion, FusionConfig};
use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{build_world, WorldConfig};

fn main() -> mmlang::Result<()> {
    env_logger::init();
    let seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let world = build_world(&WorldConfig::fusion(), &rng_fork(0, "world"))?;
    let config = FusionConfig { seeds: (0..seeds).collect(), ..FusionConfig::default() };
    let report = run_fusion(&world, &config)?;
    for (s, m) in report.seeds.iter().zip(&report.per_seed) {
        println!(
            "seed {s}: joint {:.3}/{:.3}  unimodal {:.3}/{:.3}",
            m["accuracy1"], m["accuracy2"], m["unimodal_accuracy1"], m["unimodal_accuracy2"]
        );
    }
    println!(
        "mean gain {:.2} points (joint {:.3}, unimodal {:.3})",
        100.0 * report.metrics["gain"],
        report.metrics["joint_mean"],
        report.metrics["unimodal_mean"]
    );
    Ok(())
}
