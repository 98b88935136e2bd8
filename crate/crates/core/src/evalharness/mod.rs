//! Experiment protocols: fusion (joint vs separately trained unimodal
//! classifiers), cross-modal retrieval, and few-shot co-learning with
//! unimodal and full-data baselines.

pub mod metrics;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{
    accuracy, cosine_loss, mean_std, metrics_bruteforce_oracle, retrieval_metrics, true_ranks,
    RetrievalMetrics,
};
pub use report::{fingerprint, MetricReport, Metrics, Task};

use crate::decoders::predict_label;
use crate::encoders::{encode, EncoderDims, EncoderParams, Pooling};
use crate::error::{Error, Result};
use crate::model::{Model, ModelShape};
use crate::numkernel::{dot, rng_fork, RngStream};
use crate::synthworld::{
    oracle_pair_score, sample_datasets, sample_labeled, ConceptWorld, DatasetSizes, DatasetTriple,
    LabelSpace, Labeled, Modality, ModalityInstance, Pair,
};
use crate::trainer::{run_training, Steps, TrainConfig};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

pub fn embed_all(encoder: &EncoderParams, xs: &[&ModalityInstance]) -> Result<Vec<Vec<f32>>> {
    xs.iter().map(|x| encode(encoder, x)).collect()
}

/// `sim[i][j] = e1(x1_i) . e2(x2_j)`
pub fn similarity_matrix(model: &Model, pairs: &[Pair]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f32>>, Vec<Vec<f32>>)> {
    let u = embed_all(&model.e1, &pairs.iter().map(|p| &p.x1).collect::<Vec<_>>())?;
    let v = embed_all(&model.e2, &pairs.iter().map(|p| &p.x2).collect::<Vec<_>>())?;
    let sim = u.iter().map(|a| v.iter().map(|b| dot(a, b)).collect()).collect();
    Ok((sim, u, v))
}

/// Ranks every modality-2 instance of `pairs` for each modality-1 query.
/// Produces `recall@k` for each `k`, `mean_rank` and `cosine_loss`.
pub fn eval_retrieval(model: &Model, pairs: &[Pair], ks: &[usize]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::Empty("retrieval pool"));
    }
    let (sim, u, v) = similarity_matrix(model, pairs)?;
    let m = retrieval_metrics(&sim, ks)?;
    let mut out = Metrics::new();
    for (k, r) in m.recall_at {
        out.insert(format!("recall@{k}"), r);
    }
    out.insert("mean_rank".into(), m.mean_rank);
    out.insert("cosine_loss".into(), cosine_loss(&u, &v)?);
    Ok(out)
}

pub fn classification_accuracy(encoder: &EncoderParams, model: &Model, test: &[Labeled]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let predicted = test
        .iter()
        .map(|l| predict_label(&model.phi, &encode(encoder, &l.instance)?))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = test.iter().map(|l| l.label).collect();
    accuracy(&predicted, &truth)
}

/// `accuracy1` of the classifier over encoder 1 on `test1`, `accuracy2` likewise.
pub fn eval_fusion(model: &Model, test1: &[Labeled], test2: &[Labeled]) -> Result<Metrics> {
    Ok(Metrics::from([
        ("accuracy1".to_string(), classification_accuracy(&model.e1, model, test1)?),
        ("accuracy2".to_string(), classification_accuracy(&model.e2, model, test2)?),
    ]))
}

/// Mean cross-modal similarity `e1(x1_i) . e2(x2_j)`, `i != j`, split by
/// whether the two latent sequences share a concept. Returns `(shared, disjoint)`.
pub fn smoothness(model: &Model, pairs: &[Pair]) -> Result<(f64, f64)> {
    let (sim, _, _) = similarity_matrix(model, pairs)?;
    let (mut shared, mut disjoint) = ((0.0, 0usize), (0.0, 0usize));
    for (i, p) in pairs.iter().enumerate() {
        for (j, q) in pairs.iter().enumerate() {
            if i == j {
                continue;
            }
            let acc = if oracle_pair_score(&p.x1, &q.x2)? > 0.0 { &mut shared } else { &mut disjoint };
            acc.0 += sim[i][j];
            acc.1 += 1;
        }
    }
    if shared.1 == 0 || disjoint.1 == 0 {
        return Err(Error::InsufficientData("need both overlapping and disjoint pairs".into()));
    }
    Ok((shared.0 / shared.1 as f64, disjoint.0 / disjoint.1 as f64))
}

fn only(steps: Steps) -> impl Fn(&TrainConfig) -> TrainConfig {
    move |c| TrainConfig { steps, ..c.clone() }
}

/// Separately trained classifiers for each modality under the same budget
/// and initialization as the joint model: `unimodal_accuracy1/2`.
pub fn unimodal_baselines(
    train: &DatasetTriple,
    test1: &[Labeled],
    test2: &[Labeled],
    shape: &ModelShape,
    config: &TrainConfig,
) -> Result<Metrics> {
    let none = Steps { align: false, classify1: false, classify2: false };
    let init = Model::init(shape, config.seed)?;
    let (m1, _) = run_training(train, init.clone(), &only(Steps { classify1: true, ..none })(config))?;
    let (m2, _) = run_training(train, init, &only(Steps { classify2: true, ..none })(config))?;
    Ok(Metrics::from([
        ("unimodal_accuracy1".to_string(), classification_accuracy(&m1.e1, &m1, test1)?),
        ("unimodal_accuracy2".to_string(), classification_accuracy(&m2.e2, &m2, test2)?),
    ]))
}

fn add_fusion_summary(m: &mut Metrics) {
    let joint = (m["accuracy1"] + m["accuracy2"]) / 2.0;
    let uni = (m["unimodal_accuracy1"] + m["unimodal_accuracy2"]) / 2.0;
    m.insert("joint_mean".into(), joint);
    m.insert("unimodal_mean".into(), uni);
    m.insert("gain".into(), joint - uni);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub seeds: Vec<u64>,
    pub sizes: DatasetSizes,
    pub test_size: usize,
    pub dims: EncoderDims,
    pub pooling: Pooling,
    pub train: TrainConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            sizes: DatasetSizes { n1: 400, n2: 400, n3: 2000 },
            test_size: 1000,
            dims: EncoderDims::default(),
            pooling: Pooling::PositionTagged,
            train: TrainConfig { holdout_fraction: 0.0, ..TrainConfig::default() },
        }
    }
}

/// Per seed: samples data and test sets, trains the joint model and both
/// unimodal baselines, and scores all of them.
pub fn fusion_trial(world: &ConceptWorld, config: &FusionConfig, seed: u64) -> Result<Metrics> {
    let root = rng_fork(seed, "fusion");
    let data = sample_datasets(world, config.sizes, &root.fork("data"))?;
    let test1 = sample_labeled(world, Modality::One, config.test_size, LabelSpace::Class, &mut root.fork("test1"))?;
    let test2 = sample_labeled(world, Modality::Two, config.test_size, LabelSpace::Class, &mut root.fork("test2"))?;
    let shape = ModelShape::for_world(world, config.dims, config.pooling);
    let train = TrainConfig { seed, ..config.train.clone() };
    let (joint, _) = run_training(&data, Model::init(&shape, seed)?, &train)?;
    let mut m = eval_fusion(&joint, &test1, &test2)?;
    m.extend(unimodal_baselines(&data, &test1, &test2, &shape, &train)?);
    add_fusion_summary(&mut m);
    Ok(m)
}

pub fn run_fusion(world: &ConceptWorld, config: &FusionConfig) -> Result<MetricReport> {
    let per_seed = config
        .seeds
        .iter()
        .map(|&s| {
            log::info!("fusion seed {s}");
            fusion_trial(world, config, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::aggregate(Task::Fusion, fingerprint(config)?, config.seeds.clone(), per_seed))
}

/// Fusion scores for an already trained model, with baselines trained on
/// `train` under `config`.
pub fn fusion_report(
    model: &Model,
    train: &DatasetTriple,
    test1: &[Labeled],
    test2: &[Labeled],
    config: &TrainConfig,
    config_fingerprint: String,
) -> Result<MetricReport> {
    let mut m = eval_fusion(model, test1, test2)?;
    m.extend(unimodal_baselines(train, test1, test2, &model.shape(), config)?);
    add_fusion_summary(&mut m);
    Ok(MetricReport::single(Task::Fusion, config_fingerprint, config.seed, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColearnConfig {
    pub source: Modality,
    pub target: Modality,
    pub shots: Vec<usize>,
    pub seeds: usize,
    pub sizes: DatasetSizes,
    pub test_size: usize,
    pub dims: EncoderDims,
    pub pooling: Pooling,
    /// Source-phase training (alignment plus source classification). The
    /// oracle trains on all target data under this budget.
    pub pretrain: TrainConfig,
    pub finetune_iterations: usize,
    pub finetune_batch: usize,
    pub finetune_lr: f64,
}

impl Default for ColearnConfig {
    fn default() -> Self {
        Self {
            source: Modality::One,
            target: Modality::Two,
            shots: DEFAULT_KS.to_vec(),
            seeds: 10,
            sizes: DatasetSizes { n1: 2000, n2: 2000, n3: 2000 },
            test_size: 1000,
            dims: EncoderDims::default(),
            pooling: Pooling::PositionTagged,
            pretrain: TrainConfig { holdout_fraction: 0.0, ..TrainConfig::default() },
            finetune_iterations: 300,
            finetune_batch: 32,
            finetune_lr: 0.01,
        }
    }
}

impl ColearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source == self.target {
            return Err(Error::InvalidConfig("source and target modalities must differ".into()));
        }
        if self.seeds == 0 || self.shots.is_empty() || self.shots.contains(&0) {
            return Err(Error::InvalidConfig("need at least one seed and shots >= 1".into()));
        }
        self.pretrain.validate()
    }

    fn finetune(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.finetune_iterations,
            batch1: self.finetune_batch,
            batch2: self.finetune_batch,
            learning_rate: self.finetune_lr,
            seed,
            holdout_fraction: 0.0,
            eval_every: self.finetune_iterations.max(1),
            steps: classify_only(self.target),
            ..self.pretrain.clone()
        }
    }

    fn oracle(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            holdout_fraction: 0.0,
            steps: classify_only(self.target),
            ..self.pretrain.clone()
        }
    }
}

fn classify_only(m: Modality) -> Steps {
    Steps { align: false, classify1: m == Modality::One, classify2: m == Modality::Two }
}

fn labeled_of(data: &DatasetTriple, m: Modality) -> &[Labeled] {
    match m {
        Modality::One => &data.d1,
        Modality::Two => &data.d2,
    }
}

fn triple_with(m: Modality, items: Vec<Labeled>) -> DatasetTriple {
    match m {
        Modality::One => DatasetTriple { d1: items, ..DatasetTriple::default() },
        Modality::Two => DatasetTriple { d2: items, ..DatasetTriple::default() },
    }
}

/// Picks `k` examples. With at least one per class available the pick is
/// class-stratified (round-robin over shuffled classes), otherwise uniform
/// without replacement. `k` equal to the set size returns the set unchanged.
pub fn select_shots(data: &[Labeled], k: usize, num_classes: usize, rng: &mut RngStream) -> Result<Vec<Labeled>> {
    if k > data.len() {
        return Err(Error::InsufficientData(format!("{k} shots requested from {} examples", data.len())));
    }
    if k == data.len() {
        return Ok(data.to_vec());
    }
    let mut picked = Vec::with_capacity(k);
    if k >= num_classes {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, l) in data.iter().enumerate() {
            by_class.entry(l.label).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_class.into_values().collect();
        for g in &mut groups {
            rng.shuffle(g);
        }
        rng.shuffle(&mut groups);
        let mut round = 0;
        while picked.len() < k {
            for g in &groups {
                if picked.len() == k {
                    break;
                }
                if let Some(&i) = g.get(round) {
                    picked.push(i);
                }
            }
            round += 1;
        }
    } else {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        picked.extend_from_slice(&order[..k]);
    }
    Ok(picked.into_iter().map(|i| data[i].clone()).collect())
}

/// One seed of the co-learning protocol: `brainish_k<k>` (source phase then
/// target fine-tuning) and `unimodal_k<k>` (target fine-tuning from scratch)
/// for each shot count, `oracle` (all target data) and the zero-shot
/// `transfer_k0`.
pub fn colearn_trial(world: &ConceptWorld, config: &ColearnConfig, seed: u64) -> Result<Metrics> {
    let root = rng_fork(seed, "colearn");
    let data = sample_datasets(world, config.sizes, &root.fork("data"))?;
    let target_train = labeled_of(&data, config.target);
    let test = sample_labeled(world, config.target, config.test_size, LabelSpace::Class, &mut root.fork("test"))?;
    let shape = ModelShape::for_world(world, config.dims, config.pooling);
    let init = Model::init(&shape, seed)?;
    let score = |m: &Model| classification_accuracy(m.encoder(config.target), m, &test);

    let source_phase = TrainConfig {
        seed,
        steps: Steps { align: true, ..classify_only(config.source) },
        ..config.pretrain.clone()
    };
    let source_data = DatasetTriple { d3: data.d3.clone(), ..triple_with(config.source, labeled_of(&data, config.source).to_vec()) };
    let (pretrained, _) = run_training(&source_data, init.clone(), &source_phase)?;

    let finetune = config.finetune(seed);
    let mut m = Metrics::from([("transfer_k0".to_string(), score(&pretrained)?)]);
    for &k in &config.shots {
        let shots = select_shots(target_train, k, world.num_classes, &mut root.fork(&format!("shots/{k}")))?;
        let few = triple_with(config.target, shots);
        let (brainish, _) = run_training(&few, pretrained.clone(), &finetune)?;
        let (unimodal, _) = run_training(&few, init.clone(), &finetune)?;
        m.insert(format!("brainish_k{k}"), score(&brainish)?);
        m.insert(format!("unimodal_k{k}"), score(&unimodal)?);
    }
    let (oracle, _) = run_training(&triple_with(config.target, target_train.to_vec()), init, &config.oracle(seed))?;
    m.insert("oracle".into(), score(&oracle)?);
    Ok(m)
}

pub fn eval_colearning(world: &ConceptWorld, config: &ColearnConfig) -> Result<MetricReport> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.seeds as u64).collect();
    let per_seed = seeds
        .iter()
        .map(|&s| {
            log::info!("co-learning seed {s}");
            colearn_trial(world, config, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::aggregate(Task::Colearn, fingerprint(config)?, seeds, per_seed))
}
