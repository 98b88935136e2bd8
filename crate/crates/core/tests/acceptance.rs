//! Acceptance criteria 1 to 9, one PASS/FAIL line each. Runs without the
//! libtest harness so the criteria execute in order and share the trained
//! retrieval model.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use mmlang::cli::run_cli_with;
use mmlang::encoders::{EncoderDims, Pooling};
use mmlang::evalharness::{
    eval_colearning, eval_retrieval, metrics_bruteforce_oracle, retrieval_metrics, run_fusion, smoothness,
    ColearnConfig, FusionConfig, DEFAULT_KS,
};
use mmlang::gradsuite::{gradient_suite, GRAD_TOLERANCE};
use mmlang::model::ModelShape;
use mmlang::numkernel::rng_fork;
use mmlang::synthworld::{
    build_world, manifest, oracle_pair_score, sample_datasets, syntax_validity, DatasetSizes, Modality, UnitSet,
    WorldConfig,
};
use mmlang::trainer::{run_training, split_holdout, Steps, TrainConfig, TrainTrace};
use mmlang::Model;

type Outcome = mmlang::Result<(bool, String)>;

struct Retrieval {
    model: Model,
    heldout: Vec<mmlang::synthworld::Pair>,
    trace: TrainTrace,
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = 0;
    for seed in 0..20 {
        for c in gradient_suite(seed)? {
            worst = worst.max(c.max_relative_error);
            failed += usize::from(!c.passed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        failed == 0 && worst <= GRAD_TOLERANCE && secs <= 30.0,
        format!("20 seeds, worst relative error {worst:.2e} (tol {GRAD_TOLERANCE:.0e}), {failed} failed, {secs:.1}s"),
    ))
}

fn metric_oracle() -> Outcome {
    let mut rng = rng_fork(0, "acceptance/metrics");
    let ks = [1, 5, 10];
    let mut mismatches = 0;
    for i in 0..50 {
        let sim: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                (0..30)
                    .map(|_| if i % 2 == 0 { rng.uniform(-1.0, 1.0) } else { rng.below(5) as f64 / 5.0 })
                    .collect()
            })
            .collect();
        if retrieval_metrics(&sim, &ks)? != metrics_bruteforce_oracle(&sim, &ks)? {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("50 random 30x30 matrices (25 with ties), {mismatches} mismatches")))
}

fn retrieval(shared: &mut Option<Retrieval>) -> Outcome {
    let world = build_world(&WorldConfig::default(), &rng_fork(0, "world"))?;
    let data = sample_datasets(&world, DatasetSizes::default(), &rng_fork(0, "data"))?;
    let shape = ModelShape::for_world(&world, EncoderDims::default(), Pooling::Mean);
    let init = Model::init(&shape, 0)?;
    let config = TrainConfig::default();
    let (_, heldout) = split_holdout(&data, config.holdout_fraction, config.seed);

    let start = Instant::now();
    let (model, trace) = run_training(&data, init.clone(), &config)?;
    let secs = start.elapsed().as_secs_f64();
    let trained = eval_retrieval(&model, &heldout.d3, &DEFAULT_KS)?;
    let untrained = eval_retrieval(&init, &heldout.d3, &DEFAULT_KS)?;
    let no_align = TrainConfig { steps: Steps { align: false, ..Steps::default() }, ..config };
    let (unaligned, _) = run_training(&data, init, &no_align)?;
    let unaligned = eval_retrieval(&unaligned, &heldout.d3, &DEFAULT_KS)?;

    let (r1, rank) = (trained["recall@1"], trained["mean_rank"]);
    let pass = r1 >= 0.2 && rank <= 20.0 && untrained["recall@1"] <= 0.02 && secs <= 120.0;
    let detail = format!(
        "{} held-out pairs: R@1 {r1:.3}, mean rank {rank:.2}, untrained R@1 {:.3}, no-alignment R@1 {:.3} (reported only), {secs:.1}s training",
        heldout.d3.len(),
        untrained["recall@1"],
        unaligned["recall@1"],
    );
    *shared = Some(Retrieval { model, heldout: heldout.d3, trace });
    Ok((pass, detail))
}

fn fusion() -> Outcome {
    let start = Instant::now();
    let world = build_world(&WorldConfig::fusion(), &rng_fork(0, "world"))?;
    let report = run_fusion(&world, &FusionConfig::default())?;
    let m = |k: &str| report.get(k).unwrap_or(f64::NAN);
    let pass = m("accuracy1") >= m("unimodal_accuracy1") && m("accuracy2") >= m("unimodal_accuracy2") && m("gain") >= 0.02;
    Ok((
        pass,
        format!(
            "{} seeds: joint {:.3}/{:.3} vs unimodal {:.3}/{:.3}, gain {:.3} +- {:.3}, {:.0}s",
            report.seeds.len(),
            m("accuracy1"),
            m("accuracy2"),
            m("unimodal_accuracy1"),
            m("unimodal_accuracy2"),
            m("gain"),
            m("gain_std"),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn colearning() -> Outcome {
    let start = Instant::now();
    let world = build_world(&WorldConfig::compact(), &rng_fork(0, "world"))?;
    let config = ColearnConfig::default();
    let report = eval_colearning(&world, &config)?;
    let m = |k: &str| report.get(k).unwrap_or(f64::NAN);
    let wins = config.shots.iter().filter(|k| m(&format!("brainish_k{k}")) >= m(&format!("unimodal_k{k}"))).count();
    let per_k: Vec<String> = config
        .shots
        .iter()
        .map(|k| format!("k{k} {:.3}/{:.3}", m(&format!("brainish_k{k}")), m(&format!("unimodal_k{k}"))))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = wins >= 2 && m("oracle") >= m("unimodal_k10") && secs <= 600.0;
    Ok((
        pass,
        format!(
            "{} seeds, pretrained/unimodal {}, transfer {:.3}, oracle {:.3}, wins {wins}/{}, {secs:.0}s",
            config.seeds,
            per_k.join(", "),
            m("transfer_k0"),
            m("oracle"),
            config.shots.len()
        ),
    ))
}

fn training_dynamics(shared: &Option<Retrieval>) -> Outcome {
    let world = build_world(&WorldConfig::default(), &rng_fork(0, "world"))?;
    let data = sample_datasets(&world, DatasetSizes::default(), &rng_fork(0, "data"))?;
    let init: Model = Model::init(&ModelShape::for_world(&world, EncoderDims::default(), Pooling::Mean), 0)?;
    let (zero_iter, _) = run_training(&data, init.clone(), &TrainConfig { iterations: 0, ..TrainConfig::default() })?;
    let (zero_lr, _) =
        run_training(&data, init.clone(), &TrainConfig { iterations: 20, learning_rate: 0.0, ..TrainConfig::default() })?;
    let frozen = zero_iter.same_parameters(&init) && zero_lr.same_parameters(&init);
    let Some(r) = shared else {
        return Ok((false, "no trace from the retrieval run".into()));
    };
    let (first, last) = (r.trace.first_heldout().unwrap_or(f64::NAN), r.trace.last_heldout().unwrap_or(f64::NAN));
    Ok((
        frozen && last < first,
        format!("zero iterations and zero rate leave parameters identical: {frozen}; held-out alignment loss {first:.3} -> {last:.3}"),
    ))
}

fn geometry(shared: &Option<Retrieval>) -> Outcome {
    let Some(r) = shared else {
        return Ok((false, "no model from the retrieval run".into()));
    };
    let (same, disjoint) = smoothness(&r.model, &r.heldout)?;
    Ok((
        same - disjoint >= 0.1,
        format!("mean similarity shared-concept {same:.3} vs disjoint {disjoint:.3}, gap {:.3}", same - disjoint),
    ))
}

const SMALL: &str = r#"{
  "world": { "num_concepts": 10, "num_classes": 10, "num_clusters": 5 },
  "datasets": { "n1": 200, "n2": 200, "n3": 200 },
  "train": { "iterations": 100 }
}"#;

fn reproducibility() -> Outcome {
    std::env::remove_var("BRAINISH_SEED");
    let run = || -> mmlang::Result<(Vec<u8>, Vec<u8>, String)> {
        let dir = tempfile::tempdir().map_err(|e| mmlang::Error::io(std::env::temp_dir(), e))?;
        let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
        std::fs::write(p("config.json"), SMALL).map_err(|e| mmlang::Error::io(p("config.json"), e))?;
        let mut log = String::new();
        for argv in [
            vec!["mmlang", "gen", "--config", &p("config.json"), "--out", &p("data"), "--seed", "3"],
            vec!["mmlang", "train", "--config", &p("config.json"), "--data", &p("data"), "--out", &p("model.bin"), "--seed", "3"],
            vec!["mmlang", "eval", "--task", "retrieval", "--model", &p("model.bin"), "--data", &p("data"), "--out", &p("report.json")],
        ] {
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = run_cli_with(argv, &mut out, &mut err);
            if code != 0 {
                return Err(mmlang::Error::Format(format!("exit {code}: {}", String::from_utf8_lossy(&err))));
            }
            log.push_str(&String::from_utf8_lossy(&out));
        }
        let read = |n: &str| std::fs::read(p(n)).map_err(|e| mmlang::Error::io(p(n), e));
        Ok((read("model.bin")?, read("report.json")?, log))
    };
    let (a, b) = (run()?, run()?);
    Ok((
        a == b,
        format!("two gen/train/eval runs: checkpoint {} bytes identical {}, report identical {}", a.0.len(), a.0 == b.0, a.1 == b.1),
    ))
}

fn world_oracles() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..12u64 {
        let world = common::tiny_world(seed);
        let mut rng = rng_fork(seed, "acceptance/sets");
        for _ in 0..8 {
            let m = if rng.bernoulli(0.5) { Modality::One } else { Modality::Two };
            let vocab = world.vocab(m);
            let a = UnitSet::new(m, (0..vocab).filter(|_| rng.bernoulli(0.3)).collect::<Vec<_>>());
            let b = UnitSet::new(m, (0..vocab).filter(|_| rng.bernoulli(0.3)).collect::<Vec<_>>());
            worst = worst.max((syntax_validity(&world, &a, &b)? - common::enumerate_validity(&world, &a, &b)).abs());
        }
    }

    let world = build_world(&WorldConfig::default(), &rng_fork(0, "world"))?;
    let data = sample_datasets(&world, DatasetSizes { n1: 0, n2: 0, n3: 1000 }, &rng_fork(0, "data"))?;
    let mut off_oracle = 0;
    for p in &data.d3 {
        if oracle_pair_score(&p.x1, &p.x2)? != 1.0 {
            off_oracle += 1;
        }
    }

    let draws = 10_000;
    let mut freq_dev = 0.0f64;
    for m in [Modality::One, Modality::Two] {
        for c in 0..world.num_concepts {
            let mut rng = rng_fork(c as u64, &format!("acceptance/freq/{m}"));
            let mut counts = vec![0usize; world.vocab(m)];
            for _ in 0..draws {
                counts[manifest(&world, c, m, &mut rng)?] += 1;
            }
            for e in &world.modality(m).supports[c] {
                freq_dev = freq_dev.max((counts[e.unit] as f64 / draws as f64 - e.prob).abs());
            }
        }
    }
    Ok((
        worst <= 1e-12 && off_oracle == 0 && freq_dev <= 0.02,
        format!(
            "validity vs enumeration max error {worst:.1e}, {off_oracle}/1000 pairs off the oracle, max frequency deviation {freq_dev:.4} over {draws} draws"
        ),
    ))
}

fn main() -> ExitCode {
    let mut shared = None;
    let mut all = true;
    let criteria: Vec<(usize, Box<dyn FnOnce(&mut Option<Retrieval>) -> Outcome>)> = vec![
        (1, Box::new(|_| gradients())),
        (2, Box::new(|_| metric_oracle())),
        (3, Box::new(retrieval)),
        (4, Box::new(|_| fusion())),
        (5, Box::new(|_| colearning())),
        (6, Box::new(|s| training_dynamics(s))),
        (7, Box::new(|s| geometry(s))),
        (8, Box::new(|_| reproducibility())),
        (9, Box::new(|_| world_oracles())),
    ];
    for (n, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = check(&mut shared).unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= pass;
        println!(
            "criterion {n}: {} {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
