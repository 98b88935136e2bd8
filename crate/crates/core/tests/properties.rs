//! Invariants over randomly generated inputs.

use mmlang::cli::checkpoint::{decode_checkpoint, encode_checkpoint};
use mmlang::cli::dataset_io::{labeled_jsonl, parse_record, pairs_jsonl};
use mmlang::cli::RunConfig;
use mmlang::decoders::{predict_label, rank_scores, ClassifierParams};
use mmlang::encoders::{encode, EncoderDims, Pooling};
use mmlang::model::ModelShape;
use mmlang::numkernel::{argmax, dot, l2_normalize, rng_fork, softmax, Tensor};
use mmlang::synthworld::{build_world, sample_datasets, DatasetSizes, Modality, ModalityInstance, WorldConfig};
use mmlang::trainer::sgd_step;
use mmlang::Model;
use proptest::prelude::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), label in "[a-z/]{0,12}") {
        let mut a = rng_fork(seed, &label);
        let mut b = rng_fork(seed, &label);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut other = rng_fork(seed, &format!("{label}x"));
        let xs: Vec<u64> = (0..4).map(|_| rng_fork(seed, &label).next_u64()).collect();
        prop_assert!(xs.iter().all(|&x| x == xs[0]));
        prop_assert_ne!(rng_fork(seed, &label).next_u64(), other.next_u64());
    }

    #[test]
    fn bounded_draws_stay_in_range(seed in any::<u64>(), n in 1usize..1000) {
        let mut r = rng_fork(seed, "below");
        for _ in 0..32 {
            prop_assert!(r.below(n) < n);
            let u = r.next_f64();
            prop_assert!((0.0..1.0).contains(&u));
        }
        let mut v: Vec<usize> = (0..n.min(50)).collect();
        r.shuffle(&mut v);
        v.sort_unstable();
        prop_assert_eq!(v, (0..n.min(50)).collect::<Vec<_>>());
    }

    #[test]
    fn normalize_gives_unit_norm(v in finite_vec(1..20)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3);
        let (u, norm) = l2_normalize(&v).unwrap();
        prop_assert!((dot(&u, &u).sqrt() - 1.0).abs() <= 1e-6);
        for (a, b) in u.iter().zip(&v) {
            prop_assert!((a * norm - b).abs() <= 1e-9 * norm.max(1.0));
        }
    }

    #[test]
    fn softmax_is_a_distribution(v in finite_vec(1..20), shift in -100.0f64..100.0) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert_eq!(argmax(&v), argmax(&shifted));
    }

    #[test]
    fn ranking_is_sorted_with_index_ties(scores in prop::collection::vec((0u8..6).prop_map(f64::from), 1..40)) {
        let k = scores.len();
        let r = rank_scores(&scores, k).unwrap();
        for w in r.ordering.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(scores[a] > scores[b] || (scores[a] == scores[b] && a < b));
        }
    }

    #[test]
    fn sgd_moves_each_parameter_exactly(p in prop::collection::vec(-10.0f32..10.0, 1..16), lr in 0.0f64..1.0) {
        let g: Vec<f32> = p.iter().map(|x| x * 0.5 - 1.0).collect();
        let mut t = Tensor::from_vec(p.clone()).unwrap();
        sgd_step(&mut t, &Tensor::from_vec(g.clone()).unwrap(), lr).unwrap();
        for ((new, old), grad) in t.data().iter().zip(&p).zip(&g) {
            prop_assert_eq!(*new, old - (lr as f32) * grad);
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000, tagged in any::<bool>(), out in 1usize..6) {
        let pooling = if tagged { Pooling::PositionTagged } else { Pooling::Mean };
        let shape = ModelShape {
            vocab1: 9,
            vocab2: 7,
            max_len: if tagged { 2 } else { 0 },
            num_classes: 3,
            dims: EncoderDims { embed: 4, hidden: 3, out },
            pooling,
        };
        let m: Model = Model::init(&shape, seed).unwrap();
        let bytes = encode_checkpoint(&m, &RunConfig::default()).unwrap();
        let (back, _) = decode_checkpoint(&bytes).unwrap();
        prop_assert!(back.same_parameters(&m));
        for cut in [1usize, 3, 4] {
            prop_assert!(decode_checkpoint(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn encoder_outputs_unit_norm(seed in 0u64..200, units in prop::collection::vec(0usize..200, 1..3)) {
        let world = build_world(&WorldConfig::default(), &rng_fork(0, "world")).unwrap();
        let shape = ModelShape::for_world(&world, EncoderDims::default(), Pooling::PositionTagged);
        let m: Model = Model::init(&shape, seed).unwrap();
        for modality in [Modality::One, Modality::Two] {
            let e = encode(m.encoder(modality), &ModalityInstance::new(modality, units.clone())).unwrap();
            prop_assert!((dot(&e, &e).sqrt() - 1.0).abs() <= 1e-5);
            let label = predict_label(&m.phi, &e).unwrap();
            prop_assert!(label < world.num_classes);
        }
    }

    #[test]
    fn dataset_records_round_trip(seed in 0u64..100) {
        let world = build_world(&WorldConfig::default(), &rng_fork(0, "world")).unwrap();
        let d = sample_datasets(&world, DatasetSizes { n1: 5, n2: 5, n3: 5 }, &rng_fork(seed, "d")).unwrap();
        for line in labeled_jsonl(&d.d1).unwrap().lines() {
            let r = parse_record(line).unwrap();
            prop_assert_eq!(r.modality, Modality::One);
            prop_assert!(r.label.is_some() && r.pair_id.is_none());
        }
        let text = pairs_jsonl(&d.d3).unwrap();
        prop_assert_eq!(text.lines().count(), 10);
    }
}

#[test]
fn classifier_ties_resolve_low() {
    let mut phi: ClassifierParams = ClassifierParams::init_linear(2, 4, &mut rng_fork(0, "phi")).unwrap();
    for t in phi.mlp.layers.iter_mut() {
        t.weight.fill(0.0);
        t.bias.fill(0.0);
    }
    assert_eq!(predict_label(&phi, &[0.6, 0.8]).unwrap(), 0);
}
