//! Shared classifier over the coordinated space, and cross-modal retrieval.

use serde::Serialize;

use crate::encoders::encode;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numkernel::{
    argmax, dot, mlp_apply, mlp_backprop_into, softmax_cross_entropy, Activation, MlpParams,
    ParamSet, Real, RngStream, Tensor,
};
use crate::synthworld::{Modality, ModalityInstance};

/// The single classifier used for both modalities. A linear map `d -> C` by default.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams<T: Real = f32> {
    pub mlp: MlpParams<T>,
}

impl<T: Real> ParamSet for ClassifierParams<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.mlp.tensors_mut()
    }
}

impl<T: Real> ClassifierParams<T> {
    pub fn init_linear(dim: usize, classes: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(Self {
            mlp: MlpParams::init(&[dim, classes], &[Activation::Identity], rng)?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn logits(&self, embedding: &[T]) -> Result<Vec<T>> {
        mlp_apply(&self.mlp, embedding).map(|(y, _)| y)
    }

    pub fn cast<U: Real>(&self) -> ClassifierParams<U> {
        ClassifierParams { mlp: self.mlp.cast() }
    }
}

/// Cross-entropy of the classifier on one embedding. Gradients for the
/// classifier are accumulated into `grads`; the embedding gradient is returned.
pub fn classify_loss_into<T: Real>(
    phi: &ClassifierParams<T>,
    embedding: &[T],
    label: usize,
    grads: &mut ClassifierParams<T>,
) -> Result<(f64, Vec<T>)> {
    if label >= phi.num_classes() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: phi.num_classes(),
        });
    }
    let (logits, tape) = mlp_apply(&phi.mlp, embedding)?;
    let (loss, g_logits) = softmax_cross_entropy(&logits, label)?;
    let g_embedding = mlp_backprop_into(&phi.mlp, &tape, &g_logits, &mut grads.mlp)?;
    Ok((loss, g_embedding))
}

/// `-log softmax(phi(embedding))[label]`, with gradients for the classifier and the embedding.
pub fn classify_loss<T: Real>(
    phi: &ClassifierParams<T>,
    embedding: &[T],
    label: usize,
) -> Result<(f64, ClassifierParams<T>, Vec<T>)> {
    let mut grads = phi.zeroed();
    let (loss, g) = classify_loss_into(phi, embedding, label, &mut grads)?;
    Ok((loss, grads, g))
}

/// Argmax class; ties go to the lowest class id.
pub fn predict_label<T: Real>(phi: &ClassifierParams<T>, embedding: &[T]) -> Result<usize> {
    let logits = phi.logits(embedding)?;
    argmax(&logits).ok_or(Error::Empty("classifier logits"))
}

/// Candidates ranked by similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRetrieval {
    pub ordering: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Sorts candidate indices by score descending, lower index first on ties,
/// and keeps the top `k`.
pub fn rank_scores(scores: &[f64], k: usize) -> Result<RankedRetrieval> {
    if scores.is_empty() {
        return Err(Error::Empty("retrieval candidates"));
    }
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} outside 1..={}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("retrieval scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(RankedRetrieval {
        scores: order.iter().map(|&i| scores[i]).collect(),
        ordering: order,
    })
}

/// Retrieves the `k` candidates of the other modality most aligned with the
/// query. The query's modality selects the direction.
pub fn retrieve(
    model: &Model,
    query: &ModalityInstance,
    candidates: &[ModalityInstance],
    k: usize,
) -> Result<RankedRetrieval> {
    if candidates.is_empty() {
        return Err(Error::Empty("retrieval candidates"));
    }
    let target = query.modality.other();
    let q = encode(model.encoder(query.modality), query)?;
    let scores = candidates
        .iter()
        .map(|c| {
            if c.modality != target {
                return Err(Error::ModalityMismatch {
                    expected: target.number(),
                    actual: c.modality.number(),
                });
            }
            Ok(dot(&q, &encode(model.encoder(target), c)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    rank_scores(&scores, k)
}

/// Convenience for modality-1 queries against modality-2 candidates.
pub fn retrieve_forward(
    model: &Model,
    query: &ModalityInstance,
    candidates: &[ModalityInstance],
    k: usize,
) -> Result<RankedRetrieval> {
    if query.modality != Modality::One {
        return Err(Error::ModalityMismatch {
            expected: 1,
            actual: query.modality.number(),
        });
    }
    retrieve(model, query, candidates, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{finite_diff_check, l2_normalize, rng_fork};

    fn phi(classes: usize) -> ClassifierParams<f64> {
        ClassifierParams::init_linear(4, classes, &mut rng_fork(0, "phi")).unwrap()
    }

    fn constant_phi(logits: &[f64]) -> ClassifierParams<f64> {
        let mut p = phi(logits.len());
        for l in &mut p.mlp.layers {
            l.weight.fill(0.0);
            l.bias.data_mut().copy_from_slice(logits);
        }
        p
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let p = constant_phi(&[0.0; 5]);
        let (loss, _, _) = classify_loss(&p, &[0.5, 0.5, 0.5, 0.5], 2).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_give_near_zero_loss() {
        let p = constant_phi(&[0.0, 20.0, 0.0]);
        let (loss, _, _) = classify_loss(&p, &[0.5, 0.5, 0.5, 0.5], 1).unwrap();
        assert!(loss < 1e-3 && loss >= 0.0);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            classify_loss(&phi(3), &[0.0; 4], 3),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_fork(11, "ce");
        let raw: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (e, _) = l2_normalize(&raw).unwrap();
        let p = phi(6);
        let err = finite_diff_check(
            |q: &ClassifierParams<f64>| classify_loss(q, &e, 4).map(|(l, g, _)| (l, g)),
            &p,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
        // Embedding gradient.
        let emb = Tensor::from_vec(e.clone()).unwrap();
        let err = finite_diff_check(
            |v: &Tensor<f64>| {
                let (l, _, g) = classify_loss(&p, v.data(), 4)?;
                Ok((l, Tensor::from_vec(g)?))
            },
            &emb,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_label(&constant_phi(&[0.1, 0.9, 0.3]), &[0.0; 4]).unwrap(), 1);
        assert_eq!(predict_label(&constant_phi(&[0.2, 0.2, 0.2]), &[0.0; 4]).unwrap(), 0);
    }

    #[test]
    fn rank_tie_rule() {
        let r = rank_scores(&[0.2, 0.9, 0.9], 3).unwrap();
        assert_eq!(r.ordering, vec![1, 2, 0]);
        assert_eq!(r.scores, vec![0.9, 0.9, 0.2]);
        assert_eq!(rank_scores(&[0.2, 0.9, 0.9], 1).unwrap().ordering, vec![1]);
    }

    #[test]
    fn rank_errors() {
        assert!(matches!(rank_scores(&[], 1), Err(Error::Empty(_))));
        assert!(rank_scores(&[0.1, 0.2], 0).is_err());
        assert!(rank_scores(&[0.1, 0.2], 3).is_err());
    }
}
