//! The coordinated space: cosine similarity, the alignment distribution over
//! candidates, negative sampling from the paired set and the NCE alignment loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoders::{encode, encode_backward, encode_with_tape, EncodeTape, EncoderParams};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numkernel::ops::softmax_f64;
use crate::numkernel::{dot, ParamSet, Real, RngStream};
use crate::synthworld::{ModalityInstance, Pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `-s(x1, x2) + sum_neg s(x1, x2_neg)` on raw similarities.
    RawMargin,
    /// `-log softmax([s_pos, s_neg...] / tau)[0]`.
    #[default]
    LogSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub n_neg: usize,
    pub temperature: f64,
    pub loss_form: LossForm,
    /// Also corrupt modality 1 against each positive's modality-2 anchor.
    pub symmetric: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            n_neg: 8,
            temperature: 0.1,
            loss_form: LossForm::LogSoftmax,
            symmetric: false,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neg == 0 {
            return Err(Error::InvalidConfig("n_neg must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature <= 10.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} outside (0, 10]",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Dot product of two unit vectors, i.e. their cosine similarity.
pub fn similarity<T: Real>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "similarity",
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(dot(u, v))
}

/// Softmax of `similarities / tau`.
pub fn alignment_prob_from_similarities(similarities: &[f64], tau: f64) -> Result<Vec<f64>> {
    if similarities.is_empty() {
        return Err(Error::Empty("alignment candidates"));
    }
    let scaled: Vec<f64> = similarities.iter().map(|s| s / tau).collect();
    softmax_f64(&scaled)
}

/// Probability that `x1` shares its meaning with each candidate of the other modality.
pub fn alignment_prob<T: Real>(
    model: &Model<T>,
    x1: &ModalityInstance,
    candidates: &[ModalityInstance],
    tau: f64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::Empty("alignment candidates"));
    }
    let q = encode(model.encoder(x1.modality), x1)?;
    let sims = candidates
        .iter()
        .map(|c| similarity(&q, &encode(model.encoder(c.modality), c)?))
        .collect::<Result<Vec<_>>>()?;
    alignment_prob_from_similarities(&sims, tau)
}

/// Positives drawn from the paired set, each with its own negatives.
/// All entries are indices into `pairs`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignBatch<'a> {
    pub pairs: &'a [Pair],
    pub positives: Vec<usize>,
    /// Per positive: pairs whose modality-2 instance serves as a negative.
    pub negatives: Vec<Vec<usize>>,
    /// Per positive: pairs whose modality-1 instance serves as a negative
    /// (symmetric corruption only).
    pub negatives_x1: Option<Vec<Vec<usize>>>,
}

fn draw_excluding(n: usize, exclude: usize, count: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(count);
    while chosen.len() < count {
        let mut j = rng.below(n - 1);
        if j >= exclude {
            j += 1;
        }
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    chosen
}

/// For each positive, draws `n_neg` distinct other pairs uniformly without
/// replacement.
pub fn sample_negatives<'a>(
    d3: &'a [Pair],
    positives: &[usize],
    n_neg: usize,
    symmetric: bool,
    rng: &mut RngStream,
) -> Result<AlignBatch<'a>> {
    if n_neg == 0 {
        return Err(Error::InvalidConfig("n_neg must be at least 1".into()));
    }
    if d3.len() <= n_neg {
        return Err(Error::InsufficientData(format!(
            "paired set of {} cannot supply {n_neg} negatives per positive",
            d3.len()
        )));
    }
    if let Some(&p) = positives.iter().find(|&&p| p >= d3.len()) {
        return Err(Error::InvalidConfig(format!("positive index {p} out of range")));
    }
    let negatives = positives
        .iter()
        .map(|&p| draw_excluding(d3.len(), p, n_neg, rng))
        .collect();
    let negatives_x1 = symmetric.then(|| {
        positives
            .iter()
            .map(|&p| draw_excluding(d3.len(), p, n_neg, rng))
            .collect()
    });
    Ok(AlignBatch {
        pairs: d3,
        positives: positives.to_vec(),
        negatives,
        negatives_x1,
    })
}

/// Loss value plus gradients for both encoders.
#[derive(Debug, Clone)]
pub struct NceOutput<T: Real = f32> {
    pub loss: f64,
    pub e1: EncoderParams<T>,
    pub e2: EncoderParams<T>,
}

struct Encoded<T: Real> {
    embedding: Vec<T>,
    tape: EncodeTape<T>,
    grad: Vec<f64>,
}

/// Encodes each referenced pair member once and collects embedding gradients.
struct Cache<'a, T: Real> {
    encoder: &'a EncoderParams<T>,
    entries: BTreeMap<usize, Encoded<T>>,
}

impl<'a, T: Real> Cache<'a, T> {
    fn new(encoder: &'a EncoderParams<T>) -> Self {
        Self {
            encoder,
            entries: BTreeMap::new(),
        }
    }

    fn ensure(&mut self, key: usize, x: &ModalityInstance) -> Result<()> {
        if !self.entries.contains_key(&key) {
            let (embedding, tape) = encode_with_tape(self.encoder, x)?;
            let grad = vec![0.0; embedding.len()];
            self.entries.insert(key, Encoded { embedding, tape, grad });
        }
        Ok(())
    }

    fn embedding(&self, key: usize) -> &[T] {
        &self.entries[&key].embedding
    }

    fn add_grad(&mut self, key: usize, scale: f64, direction: &[T]) {
        let e = self.entries.get_mut(&key).expect("encoded");
        for (g, d) in e.grad.iter_mut().zip(direction) {
            *g += scale * d.widen();
        }
    }

    fn backward(
        self,
        instance: impl Fn(usize) -> &'a ModalityInstance,
    ) -> Result<EncoderParams<T>> {
        let mut grads = self.encoder.zeroed();
        for (key, e) in &self.entries {
            let g: Vec<T> = e.grad.iter().map(|&v| T::narrow(v)).collect();
            encode_backward(self.encoder, instance(*key), &e.tape, &g, &mut grads)?;
        }
        Ok(grads)
    }
}

/// Per-candidate derivative of one contrastive term, candidate 0 being the positive.
fn term(sims: &[f64], config: &AlignConfig) -> (f64, Vec<f64>) {
    match config.loss_form {
        LossForm::RawMargin => {
            let loss = -sims[0] + sims[1..].iter().sum::<f64>();
            let mut d = vec![1.0; sims.len()];
            d[0] = -1.0;
            (loss, d)
        }
        LossForm::LogSoftmax => {
            let tau = config.temperature;
            let z: Vec<f64> = sims.iter().map(|s| s / tau).collect();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let loss = lse - z[0];
            let d = z
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let p = (v - lse).exp();
                    (if j == 0 { p - 1.0 } else { p }) / tau
                })
                .collect();
            (loss, d)
        }
    }
}

/// Contrastive alignment loss averaged over the batch's positives, with exact
/// gradients for both encoders.
///
/// Each positive contributes one term comparing its pair against its
/// modality-2 negatives; with symmetric corruption a second term compares the
/// modality-2 anchor against modality-1 negatives.
pub fn nce_loss<T: Real>(
    model: &Model<T>,
    batch: &AlignBatch<'_>,
    config: &AlignConfig,
) -> Result<NceOutput<T>> {
    if batch.positives.is_empty() {
        return Err(Error::Empty("alignment batch"));
    }
    if batch.negatives.len() != batch.positives.len() {
        return Err(Error::DimensionMismatch {
            context: "negatives per positive",
            expected: batch.positives.len(),
            actual: batch.negatives.len(),
        });
    }
    config.validate()?;
    let pairs = batch.pairs;
    let mut c1 = Cache::new(&model.e1);
    let mut c2 = Cache::new(&model.e2);
    let scale = 1.0 / batch.positives.len() as f64;
    let mut total = 0.0f64;

    for (i, &p) in batch.positives.iter().enumerate() {
        c1.ensure(p, &pairs[p].x1)?;
        c2.ensure(p, &pairs[p].x2)?;
        for &n in &batch.negatives[i] {
            c2.ensure(n, &pairs[n].x2)?;
        }
        let candidates: Vec<usize> = std::iter::once(p).chain(batch.negatives[i].iter().copied()).collect();
        let sims = candidates
            .iter()
            .map(|&c| similarity(c1.embedding(p), c2.embedding(c)))
            .collect::<Result<Vec<_>>>()?;
        let (loss, d) = term(&sims, config);
        total += loss;
        for (&c, &dj) in candidates.iter().zip(&d) {
            let anchor = c1.embedding(p).to_vec();
            let cand = c2.embedding(c).to_vec();
            c1.add_grad(p, scale * dj, &cand);
            c2.add_grad(c, scale * dj, &anchor);
        }

        if let Some(neg1) = &batch.negatives_x1 {
            for &n in &neg1[i] {
                c1.ensure(n, &pairs[n].x1)?;
            }
            let candidates: Vec<usize> = std::iter::once(p).chain(neg1[i].iter().copied()).collect();
            let sims = candidates
                .iter()
                .map(|&c| similarity(c2.embedding(p), c1.embedding(c)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, d) = term(&sims, config);
            total += loss;
            for (&c, &dj) in candidates.iter().zip(&d) {
                let anchor = c2.embedding(p).to_vec();
                let cand = c1.embedding(c).to_vec();
                c2.add_grad(p, scale * dj, &cand);
                c1.add_grad(c, scale * dj, &anchor);
            }
        }
    }

    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("alignment loss".into()));
    }
    Ok(NceOutput {
        loss,
        e1: c1.backward(|k| &pairs[k].x1)?,
        e2: c2.backward(|k| &pairs[k].x2)?,
    })
}
