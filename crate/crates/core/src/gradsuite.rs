//! Finite-difference verification of every training loss path on a small
//! double-precision model.

use serde::Serialize;

use crate::alignspace::{nce_loss, sample_negatives, AlignConfig, LossForm};
use crate::decoders::ClassifierParams;
use crate::encoders::{EncoderDims, EncoderParams, Pooling};
use crate::error::Result;
use crate::model::{Model, ModelShape};
use crate::numkernel::{finite_diff_check, rng_fork, ParamSet, RngStream};
use crate::synthworld::{Labeled, Modality, ModalityInstance, Pair};
use crate::trainer::classification_loss;

pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Central-difference step. Smaller steps let f64 round-off dominate the
/// smallest gradient entries; larger ones let truncation error dominate.
pub const GRAD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub path: String,
    pub max_relative_error: f64,
    pub passed: bool,
}

const VOCAB: usize = 12;
const SLOTS: usize = 3;
const CLASSES: usize = 5;

fn instance(m: Modality, rng: &mut RngStream) -> ModalityInstance {
    let len = 1 + rng.below(SLOTS);
    ModalityInstance::new(m, (0..len).map(|_| rng.below(VOCAB)).collect())
}

fn model(seed: u64, pooling: Pooling) -> Result<Model<f64>> {
    let shape = ModelShape {
        vocab1: VOCAB,
        vocab2: VOCAB,
        max_len: if pooling == Pooling::Mean { 0 } else { SLOTS },
        num_classes: CLASSES,
        dims: EncoderDims { embed: 5, hidden: 6, out: 4 },
        pooling,
    };
    let mut m = Model::<f64>::init(&shape, seed)?;
    // Move gains and biases off their initial values so every term is exercised.
    let mut rng = rng_fork(seed, "gradsuite/perturb");
    for t in m.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.uniform(-0.2, 0.2);
        }
    }
    Ok(m)
}

fn model_grads(
    m: &Model<f64>,
    e1: Option<EncoderParams<f64>>,
    e2: Option<EncoderParams<f64>>,
    phi: Option<ClassifierParams<f64>>,
) -> Model<f64> {
    let mut g = m.zeroed();
    if let Some(e1) = e1 {
        g.e1 = e1;
    }
    if let Some(e2) = e2 {
        g.e2 = e2;
    }
    if let Some(phi) = phi {
        g.phi = phi;
    }
    g
}

/// Runs every loss path for one seed, with both pooling modes.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for pooling in [Pooling::Mean, Pooling::PositionTagged] {
        let m = model(seed, pooling)?;
        let mut rng = rng_fork(seed, "gradsuite/data");
        let pairs: Vec<Pair> = (0..6)
            .map(|i| Pair {
                pair_id: i,
                x1: instance(Modality::One, &mut rng),
                x2: instance(Modality::Two, &mut rng),
            })
            .collect();
        let labeled = |m: Modality, rng: &mut RngStream| -> Vec<Labeled> {
            (0..4).map(|_| Labeled { instance: instance(m, rng), label: rng.below(CLASSES) }).collect()
        };
        let d1 = labeled(Modality::One, &mut rng);
        let d2 = labeled(Modality::Two, &mut rng);

        let variants = [
            ("nce_raw_margin", LossForm::RawMargin, false),
            ("nce_log_softmax", LossForm::LogSoftmax, false),
            ("nce_log_softmax_symmetric", LossForm::LogSoftmax, true),
        ];
        for (name, loss_form, symmetric) in variants {
            let config = AlignConfig { n_neg: 3, temperature: 0.5, loss_form, symmetric };
            let batch = sample_negatives(&pairs, &[0, 2, 4], config.n_neg, symmetric, &mut rng.fork(name))?;
            let err = finite_diff_check(
                |p: &Model<f64>| {
                    let o = nce_loss(p, &batch, &config)?;
                    Ok((o.loss, model_grads(p, Some(o.e1), Some(o.e2), None)))
                },
                &m,
                GRAD_EPS,
            )?;
            out.push((format!("{name}/{pooling:?}"), err));
        }

        for (name, data, modality) in [("l1_cross_entropy", &d1, Modality::One), ("l2_cross_entropy", &d2, Modality::Two)] {
            let batch: Vec<&Labeled> = data.iter().collect();
            let err = finite_diff_check(
                |p: &Model<f64>| {
                    let (loss, g_enc, g_phi) = classification_loss(p.encoder(modality), &p.phi, &batch)?;
                    let g = match modality {
                        Modality::One => model_grads(p, Some(g_enc), None, Some(g_phi)),
                        Modality::Two => model_grads(p, None, Some(g_enc), Some(g_phi)),
                    };
                    Ok((loss, g))
                },
                &m,
                GRAD_EPS,
            )?;
            out.push((format!("{name}/{pooling:?}"), err));
        }
    }
    Ok(out
        .into_iter()
        .map(|(path, e)| GradCheck { path, max_relative_error: e, passed: e <= GRAD_TOLERANCE })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_seed_zero() {
        let checks = gradient_suite(0).unwrap();
        assert_eq!(checks.len(), 10);
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
