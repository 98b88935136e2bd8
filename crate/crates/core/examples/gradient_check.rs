//! Finite-difference check of every loss path over a range of seeds.
//!
//! cargo run --release --example gradient_check -- [seeds]

use mmlang::gradsuite::{gradient_suite, GRAD_TOLERANCE};

fn main() -> mmlang::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(20, |s| s.parse().expect("seed count"));
    let mut worst: Vec<(String, f64)> = Vec::new();
    for seed in 0..seeds {
        for c in gradient_suite(seed)? {
            match worst.iter_mut().find(|(p, _)| *p == c.path) {
                Some(w) => w.1 = w.1.max(c.max_relative_error),
                None => worst.push((c.path, c.max_relative_error)),
            }
        }
    }
    for (path, err) in &worst {
        let verdict = if *err <= GRAD_TOLERANCE { "ok" } else { "FAIL" };
        println!("{path:<40} {err:.2e} {verdict}");
    }
    Ok(())
}
