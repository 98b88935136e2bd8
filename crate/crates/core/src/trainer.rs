//! The alternating training loop: per iteration one alignment step on the
//! paired set (updating both encoders), one classification step on modality-1
//! data (encoder 1 and the shared classifier) and one on modality-2 data
//! (encoder 2 and the shared classifier).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignspace::{nce_loss, sample_negatives, AlignConfig};
use crate::decoders::{classify_loss_into, ClassifierParams};
use crate::encoders::{encode_backward, encode_with_tape, EncoderParams};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numkernel::{rng_fork, ParamSet, Real, RngStream};
use crate::synthworld::{DatasetTriple, Labeled, Pair};

/// Which of the three per-iteration steps run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Steps {
    pub align: bool,
    pub classify1: bool,
    pub classify2: bool,
}

impl Default for Steps {
    fn default() -> Self {
        Self {
            align: true,
            classify1: true,
            classify2: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from the base rate to zero over the run.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_align: usize,
    pub batch1: usize,
    pub batch2: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub eval_every: usize,
    pub holdout_fraction: f64,
    pub steps: Steps,
    /// Supplied from the run configuration's `align` section.
    #[serde(skip)]
    pub align: AlignConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_align: 32,
            batch1: 32,
            batch2: 32,
            learning_rate: 0.05,
            momentum: 0.0,
            schedule: LrSchedule::Constant,
            seed: 0,
            eval_every: 100,
            holdout_fraction: 0.1,
            steps: Steps::default(),
            align: AlignConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.batch_align == 0 || self.batch1 == 0 || self.batch2 == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout fraction {} outside [0, 1)", self.holdout_fraction));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        self.align.validate()
    }

    fn rate_at(&self, iteration: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear => {
                self.learning_rate * (1.0 - iteration as f64 / self.iterations.max(1) as f64)
            }
        }
    }
}

/// One logged point. Training losses are means over the batches since the
/// previous record; `None` means the step is disabled or no batch ran yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub align_loss: Option<f64>,
    pub loss1: Option<f64>,
    pub loss2: Option<f64>,
    pub heldout_align_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn first_heldout(&self) -> Option<f64> {
        self.records.iter().find_map(|r| r.heldout_align_loss)
    }

    pub fn last_heldout(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.heldout_align_loss)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// `p := p - lr * g` for every parameter. Rejects shape mismatches and
/// non-finite gradients before touching `params`.
pub fn sgd_step<P: ParamSet>(params: &mut P, grads: &P, lr: f64) -> Result<()> {
    let g = grads.tensors();
    {
        let p = params.tensors();
        if p.len() != g.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter groups",
                expected: p.len(),
                actual: g.len(),
            });
        }
        for (i, (pt, gt)) in p.iter().zip(&g).enumerate() {
            gt.ensure_shape(pt.shape())?;
            if !gt.all_finite() {
                return Err(Error::NonFinite(format!("gradient tensor {i}")));
            }
        }
    }
    let step = P::Scalar::narrow(lr);
    for (pt, gt) in params.tensors_mut().into_iter().zip(g) {
        for (p, &d) in pt.data_mut().iter_mut().zip(gt.data()) {
            *p = *p - step * d;
        }
    }
    Ok(())
}

/// Plain gradient descent, optionally with heavy-ball momentum.
#[derive(Debug, Clone)]
struct Optimizer<P: ParamSet> {
    momentum: f64,
    velocity: Option<P>,
}

impl<P: ParamSet> Optimizer<P> {
    fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: None,
        }
    }

    fn step(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        if self.momentum == 0.0 {
            return sgd_step(params, grads, lr);
        }
        let mu = P::Scalar::narrow(self.momentum);
        let v = self.velocity.get_or_insert_with(|| grads.zeroed());
        for (vt, gt) in v.tensors_mut().into_iter().zip(grads.tensors()) {
            gt.ensure_shape(vt.shape())?;
            for (a, &b) in vt.data_mut().iter_mut().zip(gt.data()) {
                *a = mu * *a + b;
            }
        }
        sgd_step(params, v, lr)
    }
}

/// Mean cross-entropy of the shared classifier over `batch`, with gradients
/// for the encoder and the classifier.
pub fn classification_loss<T: Real>(
    encoder: &EncoderParams<T>,
    phi: &ClassifierParams<T>,
    batch: &[&Labeled],
) -> Result<(f64, EncoderParams<T>, ClassifierParams<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("classification batch"));
    }
    let scale = T::narrow(1.0 / batch.len() as f64);
    let mut g_enc = encoder.zeroed();
    let mut g_phi = phi.zeroed();
    let mut total = 0.0;
    for item in batch {
        let (emb, tape) = encode_with_tape(encoder, &item.instance)?;
        let mut local = phi.zeroed();
        let (loss, g_emb) = classify_loss_into(phi, &emb, item.label, &mut local)?;
        total += loss;
        for (acc, t) in g_phi.tensors_mut().into_iter().zip(local.tensors()) {
            for (a, &b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a = *a + scale * b;
            }
        }
        let g_emb: Vec<T> = g_emb.into_iter().map(|g| g * scale).collect();
        encode_backward(encoder, &item.instance, &tape, &g_emb, &mut g_enc)?;
    }
    Ok((total / batch.len() as f64, g_enc, g_phi))
}

fn split<T: Clone>(items: &[T], fraction: f64, rng: &mut RngStream) -> (Vec<T>, Vec<T>) {
    let held = (items.len() as f64 * fraction).floor() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    rng.shuffle(&mut order);
    let mut is_held = vec![false; items.len()];
    for &i in &order[..held] {
        is_held[i] = true;
    }
    let mut train = Vec::with_capacity(items.len() - held);
    let mut heldout = Vec::with_capacity(held);
    for (item, h) in items.iter().zip(is_held) {
        if h {
            heldout.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    (train, heldout)
}

/// Reserves `floor(n * fraction)` items of each set (chosen by streams
/// `holdout/d1`, `holdout/d2`, `holdout/d3` of `seed`), preserving order.
/// Returns `(train, heldout)`.
pub fn split_holdout(
    data: &DatasetTriple,
    fraction: f64,
    seed: u64,
) -> (DatasetTriple, DatasetTriple) {
    let root = rng_fork(seed, "holdout");
    let (t1, h1) = split(&data.d1, fraction, &mut root.fork("d1"));
    let (t2, h2) = split(&data.d2, fraction, &mut root.fork("d2"));
    let (t3, h3) = split(&data.d3, fraction, &mut root.fork("d3"));
    (
        DatasetTriple { d1: t1, d2: t2, d3: t3 },
        DatasetTriple { d1: h1, d2: h2, d3: h3 },
    )
}

/// Alignment loss over every pair in `pairs`, with negatives from the same
/// set drawn by the stream `(seed, label)`. `None` if the set is too small.
pub fn evaluation_align_loss<T: Real>(
    model: &Model<T>,
    pairs: &[Pair],
    align: &AlignConfig,
    seed: u64,
    label: &str,
) -> Result<Option<f64>> {
    if pairs.len() <= align.n_neg {
        return Ok(None);
    }
    let positives: Vec<usize> = (0..pairs.len()).collect();
    let batch = sample_negatives(pairs, &positives, align.n_neg, align.symmetric, &mut rng_fork(seed, label))?;
    Ok(Some(nce_loss(model, &batch, align)?.loss))
}

#[derive(Default)]
struct Running {
    sum: f64,
    count: usize,
}

impl Running {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn take(&mut self) -> Option<f64> {
        let out = (self.count > 0).then(|| self.sum / self.count as f64);
        *self = Running::default();
        out
    }
}

fn diverged(iteration: usize, what: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Diverged { iteration, what },
        other => other,
    }
}

/// Trains `init` on the training split of `data`, logging held-out alignment
/// loss on the held-out split every `eval_every` iterations and at the end.
pub fn run_training(
    data: &DatasetTriple,
    init: Model,
    config: &TrainConfig,
) -> Result<(Model, TrainTrace)> {
    config.validate()?;
    let (train, heldout) = split_holdout(data, config.holdout_fraction, config.seed);
    let steps = config.steps;
    if steps.align && train.d3.len() <= config.align.n_neg {
        return Err(Error::InsufficientData(format!(
            "alignment needs more than {} training pairs, found {}",
            config.align.n_neg,
            train.d3.len()
        )));
    }
    if steps.classify1 && train.d1.is_empty() {
        return Err(Error::InsufficientData("modality-1 labeled set is empty".into()));
    }
    if steps.classify2 && train.d2.is_empty() {
        return Err(Error::InsufficientData("modality-2 labeled set is empty".into()));
    }

    let mut model = init;
    let mut opt_e1 = Optimizer::new(config.momentum);
    let mut opt_e2 = Optimizer::new(config.momentum);
    let mut opt_phi = Optimizer::new(config.momentum);
    let mut rng = rng_fork(config.seed, "train");
    let heldout_loss = |m: &Model| {
        evaluation_align_loss(m, &heldout.d3, &config.align, config.seed, "heldout-negatives")
    };

    let mut trace = TrainTrace::default();
    let (mut run_align, mut run1, mut run2) = (Running::default(), Running::default(), Running::default());
    trace.records.push(TraceRecord {
        iteration: 0,
        align_loss: None,
        loss1: None,
        loss2: None,
        heldout_align_loss: heldout_loss(&model)?,
    });

    for it in 0..config.iterations {
        let lr = config.rate_at(it);

        if steps.align {
            let positives: Vec<usize> = (0..config.batch_align).map(|_| rng.below(train.d3.len())).collect();
            let batch = sample_negatives(&train.d3, &positives, config.align.n_neg, config.align.symmetric, &mut rng)?;
            let out = nce_loss(&model, &batch, &config.align).map_err(diverged(it, "alignment loss"))?;
            opt_e1.step(&mut model.e1, &out.e1, lr).map_err(diverged(it, "alignment gradient"))?;
            opt_e2.step(&mut model.e2, &out.e2, lr).map_err(diverged(it, "alignment gradient"))?;
            model.updates.e1 += 1;
            model.updates.e2 += 1;
            run_align.push(out.loss);
        }

        if steps.classify1 {
            let batch: Vec<&Labeled> = (0..config.batch1).map(|_| &train.d1[rng.below(train.d1.len())]).collect();
            let (loss, g_enc, g_phi) =
                classification_loss(&model.e1, &model.phi, &batch).map_err(diverged(it, "modality-1 loss"))?;
            opt_e1.step(&mut model.e1, &g_enc, lr).map_err(diverged(it, "modality-1 gradient"))?;
            opt_phi.step(&mut model.phi, &g_phi, lr).map_err(diverged(it, "modality-1 gradient"))?;
            model.updates.e1 += 1;
            model.updates.phi += 1;
            run1.push(loss);
        }

        if steps.classify2 {
            let batch: Vec<&Labeled> = (0..config.batch2).map(|_| &train.d2[rng.below(train.d2.len())]).collect();
            let (loss, g_enc, g_phi) =
                classification_loss(&model.e2, &model.phi, &batch).map_err(diverged(it, "modality-2 loss"))?;
            opt_e2.step(&mut model.e2, &g_enc, lr).map_err(diverged(it, "modality-2 gradient"))?;
            opt_phi.step(&mut model.phi, &g_phi, lr).map_err(diverged(it, "modality-2 gradient"))?;
            model.updates.e2 += 1;
            model.updates.phi += 1;
            run2.push(loss);
        }

        let done = it + 1;
        if done % config.eval_every == 0 || done == config.iterations {
            let record = TraceRecord {
                iteration: done,
                align_loss: run_align.take(),
                loss1: run1.take(),
                loss2: run2.take(),
                heldout_align_loss: heldout_loss(&model)?,
            };
            log::debug!("{record:?}");
            trace.records.push(record);
        }
    }
    Ok((model, trace))
}
