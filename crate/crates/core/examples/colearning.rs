//! Few-shot transfer from modality 1 to modality 2 through the aligned
//! space, against target-only training and a full-data reference.
//!
//! cargo run --release --example colearning -- [seeds]

use mmlang::evalharness::{eval_colearning, ColearnConfig};
use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{build_world, WorldConfig};

fn main() -> mmlang::Result<()> {
    env_logger::init();
    let seeds = std::env::args().nth(1).map_or(10, |s| s.parse().expect("seed count"));
    let world = build_world(&WorldConfig::compact(), &rng_fork(0, "world"))?;
    let config = ColearnConfig { seeds, ..ColearnConfig::default() };
    let start = std::time::Instant::now();
    let report = eval_colearning(&world, &config)?;
    let m = &report.metrics;
    println!("zero-shot transfer {:.3}", m["transfer_k0"]);
    for k in &config.shots {
        println!(
            "k={k:>2}: transfer {:.3} ± {:.3}   unimodal {:.3} ± {:.3}",
            m[&format!("brainish_k{k}")],
            m[&format!("brainish_k{k}_std")],
            m[&format!("unimodal_k{k}")],
            m[&format!("unimodal_k{k}_std")]
        );
    }
    println!("oracle {:.3} ± {:.3}  ({:.1}s)", m["oracle"], m["oracle_std"], start.elapsed().as_secs_f64());
    Ok(())
}
