use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::rng::{stream_key, RngStream};

pub const WORLD_FORMAT_VERSION: u32 = 1;

/// Sequences beyond this count use a hashed label map instead of a table.
pub const LABEL_TABLE_LIMIT: usize = 1 << 16;

/// Modality index, serialized as `1` or `2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Modality {
    One,
    Two,
}

impl Modality {
    pub fn index(self) -> usize {
        match self {
            Modality::One => 0,
            Modality::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::One => Modality::Two,
            Modality::Two => Modality::One,
        }
    }
}

impl TryFrom<u8> for Modality {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Modality::One),
            2 => Ok(Modality::Two),
            other => Err(format!("modality must be 1 or 2, got {other}")),
        }
    }
}

impl From<Modality> for u8 {
    fn from(m: Modality) -> u8 {
        m.number()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Which concepts may fill each template slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPolicy {
    /// Every concept is allowed in every slot.
    #[default]
    Free,
    /// Slot `j` accepts concepts `c` with `c % num_slots == j`.
    Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_concepts: usize,
    pub vocab1: usize,
    pub vocab2: usize,
    pub num_slots: usize,
    pub num_classes: usize,
    pub num_clusters: usize,
    /// Support size per concept; `None` splits the vocabulary evenly.
    pub units_per_concept: Option<usize>,
    /// Fraction of a concept's support size borrowed from the next concept's support.
    pub support_overlap: f64,
    pub noise_rate: f64,
    /// When set, modality 1 uses this noise rate on odd slots and modality 2
    /// on even slots, so each modality carries evidence the other lacks.
    pub fusion_noise: Option<f64>,
    pub slot_policy: SlotPolicy,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_concepts: 20,
            vocab1: 200,
            vocab2: 200,
            num_slots: 2,
            num_classes: 40,
            num_clusters: 10,
            units_per_concept: None,
            support_overlap: 0.0,
            noise_rate: 0.05,
            fusion_noise: None,
            slot_policy: SlotPolicy::Free,
        }
    }
}

impl WorldConfig {
    /// Ten concepts spread over the full vocabularies, so labeled data alone
    /// rarely covers every unit of a concept. Used for co-learning.
    pub fn compact() -> Self {
        Self {
            num_concepts: 10,
            num_classes: 10,
            num_clusters: 5,
            ..Self::default()
        }
    }

    /// The compact world with asymmetric noise, used for fusion experiments.
    pub fn fusion() -> Self {
        Self {
            fusion_noise: Some(0.3),
            ..Self::compact()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_concepts == 0 {
            return bad("world needs at least one concept".into());
        }
        for (m, v) in [(1, self.vocab1), (2, self.vocab2)] {
            if v < 4 * self.num_concepts {
                return bad(format!(
                    "vocabulary of modality {m} ({v}) must be at least 4x the concept count ({})",
                    self.num_concepts
                ));
            }
        }
        if !(1..=8).contains(&self.num_slots) {
            return bad(format!("num_slots {} outside 1..=8", self.num_slots));
        }
        if self.num_classes < 2 {
            return bad("need at least two classes".into());
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_classes {
            return bad(format!(
                "num_clusters {} must be in 1..={}",
                self.num_clusters, self.num_classes
            ));
        }
        if let Some(s) = self.units_per_concept {
            let min_vocab = self.vocab1.min(self.vocab2);
            if s == 0 || s * self.num_concepts > min_vocab {
                return bad(format!("units_per_concept {s} does not fit the vocabulary"));
            }
        }
        if !(0.0..=1.0).contains(&self.support_overlap) {
            return bad(format!("support_overlap {} outside [0, 1]", self.support_overlap));
        }
        for rate in std::iter::once(self.noise_rate).chain(self.fusion_noise) {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("noise rate {rate} outside [0, 1]"));
            }
        }
        if self.slot_policy == SlotPolicy::Partition && self.num_concepts < self.num_slots {
            return bad("partition policy needs at least one concept per slot".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub unit: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub vocab: usize,
    /// Per concept: the units it manifests as, with their probabilities.
    pub supports: Vec<Vec<Emission>>,
    /// Per slot substitution rate.
    pub slot_noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMap {
    /// `labels[sequence_index]`.
    Table { labels: Vec<usize> },
    /// `stream_key(key, concept ids joined by ",") % num_classes`.
    Hashed { key: u64 },
}

/// The latent concept set, both modalities' manifestation processes, the
/// slot template and the label/cluster maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptWorld {
    pub format_version: u32,
    pub num_concepts: usize,
    pub num_classes: usize,
    pub num_clusters: usize,
    pub modalities: Vec<ModalitySpec>,
    /// Allowed concepts per slot, in ascending order.
    pub template: Vec<Vec<usize>>,
    pub label_map: LabelMap,
    /// Cluster id per class.
    pub cluster_map: Vec<usize>,
}

/// An ordered sequence of atomic units in one modality.
///
/// `latent` holds the generating concept sequence; learners never read it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalityInstance {
    pub modality: Modality,
    pub units: Vec<usize>,
    pub latent: Option<Vec<usize>>,
}

impl ModalityInstance {
    pub fn new(modality: Modality, units: Vec<usize>) -> Self {
        Self {
            modality,
            units,
            latent: None,
        }
    }

    pub fn without_latent(&self) -> Self {
        Self {
            latent: None,
            ..self.clone()
        }
    }
}

fn assign_supports(
    vocab: usize,
    num_concepts: usize,
    size: usize,
    overlap: f64,
    rng: &mut RngStream,
) -> Vec<Vec<Emission>> {
    let mut perm: Vec<usize> = (0..vocab).collect();
    rng.shuffle(&mut perm);
    let blocks: Vec<&[usize]> = (0..num_concepts)
        .map(|c| &perm[c * size..(c + 1) * size])
        .collect();
    let borrowed = if num_concepts > 1 {
        (overlap * size as f64).round() as usize
    } else {
        0
    };
    (0..num_concepts)
        .map(|c| {
            let mut units = blocks[c].to_vec();
            units.extend_from_slice(&blocks[(c + 1) % num_concepts][..borrowed.min(size)]);
            let weights: Vec<f64> = units.iter().map(|_| rng.uniform(0.5, 1.5)).collect();
            let total: f64 = weights.iter().sum();
            units
                .into_iter()
                .zip(weights)
                .map(|(unit, w)| Emission { unit, prob: w / total })
                .collect()
        })
        .collect()
}

/// Builds a world from `config`. Deterministic in `(config, rng)`.
pub fn build_world(config: &WorldConfig, rng: &RngStream) -> Result<ConceptWorld> {
    config.validate()?;
    let m = config.num_concepts;
    let size = config
        .units_per_concept
        .unwrap_or_else(|| config.vocab1.min(config.vocab2) / m);

    let mut modalities = Vec::with_capacity(2);
    for (idx, vocab) in [config.vocab1, config.vocab2].into_iter().enumerate() {
        let mut srng = rng.fork(&format!("supports:{}", idx + 1));
        let supports = assign_supports(vocab, m, size, config.support_overlap, &mut srng);
        let slot_noise = (0..config.num_slots)
            .map(|j| match config.fusion_noise {
                Some(r) if (idx == 0 && j % 2 == 1) || (idx == 1 && j % 2 == 0) => r,
                _ => config.noise_rate,
            })
            .collect();
        modalities.push(ModalitySpec {
            vocab,
            supports,
            slot_noise,
        });
    }

    let template: Vec<Vec<usize>> = (0..config.num_slots)
        .map(|j| match config.slot_policy {
            SlotPolicy::Free => (0..m).collect(),
            SlotPolicy::Partition => (0..m).filter(|c| c % config.num_slots == j).collect(),
        })
        .collect();

    let num_sequences = template
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()));
    let mut lrng = rng.fork("labels");
    let label_map = match num_sequences {
        Some(n) if n <= LABEL_TABLE_LIMIT => {
            let mut order: Vec<usize> = (0..n).collect();
            lrng.shuffle(&mut order);
            let mut labels = vec![0; n];
            for (rank, &seq) in order.iter().enumerate() {
                labels[seq] = rank % config.num_classes;
            }
            LabelMap::Table { labels }
        }
        _ => LabelMap::Hashed {
            key: lrng.next_u64(),
        },
    };

    let mut crng = rng.fork("clusters");
    let mut order: Vec<usize> = (0..config.num_classes).collect();
    crng.shuffle(&mut order);
    let mut cluster_map = vec![0; config.num_classes];
    for (rank, &class) in order.iter().enumerate() {
        cluster_map[class] = rank % config.num_clusters;
    }

    let world = ConceptWorld {
        format_version: WORLD_FORMAT_VERSION,
        num_concepts: m,
        num_classes: config.num_classes,
        num_clusters: config.num_clusters,
        modalities,
        template,
        label_map,
        cluster_map,
    };
    world.validate()?;
    Ok(world)
}

impl ConceptWorld {
    pub fn modality(&self, m: Modality) -> &ModalitySpec {
        &self.modalities[m.index()]
    }

    pub fn vocab(&self, m: Modality) -> usize {
        self.modality(m).vocab
    }

    pub fn num_slots(&self) -> usize {
        self.template.len()
    }

    pub fn num_sequences(&self) -> Option<usize> {
        self.template
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
    }

    /// Checks every structural invariant; used after building and loading.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.format_version != WORLD_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                supported: WORLD_FORMAT_VERSION,
            });
        }
        if self.num_concepts == 0 {
            return bad("world has no concepts".into());
        }
        if self.modalities.len() != 2 {
            return bad(format!("expected 2 modalities, found {}", self.modalities.len()));
        }
        if self.template.is_empty() {
            return bad("empty syntax template".into());
        }
        for (j, slot) in self.template.iter().enumerate() {
            if slot.is_empty() || slot.iter().any(|&c| c >= self.num_concepts) {
                return bad(format!("slot {j} has an invalid concept list"));
            }
            if slot.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("slot {j} concepts must be strictly ascending"));
            }
        }
        for (idx, spec) in self.modalities.iter().enumerate() {
            if spec.vocab < 4 * self.num_concepts {
                return bad(format!("modality {} vocabulary below 4x concepts", idx + 1));
            }
            if spec.supports.len() != self.num_concepts {
                return bad(format!("modality {} support count mismatch", idx + 1));
            }
            if spec.slot_noise.len() != self.template.len()
                || spec.slot_noise.iter().any(|r| !(0.0..=1.0).contains(r))
            {
                return bad(format!("modality {} slot noise invalid", idx + 1));
            }
            for (c, support) in spec.supports.iter().enumerate() {
                if support.is_empty() {
                    return bad(format!("concept {c} has an empty support in modality {}", idx + 1));
                }
                if support.iter().any(|e| e.unit >= spec.vocab || !(e.prob >= 0.0)) {
                    return bad(format!("concept {c} support invalid in modality {}", idx + 1));
                }
                let total: f64 = support.iter().map(|e| e.prob).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!(
                        "concept {c} manifestation in modality {} sums to {total}",
                        idx + 1
                    ));
                }
            }
        }
        if let LabelMap::Table { labels } = &self.label_map {
            if Some(labels.len()) != self.num_sequences() {
                return bad("label table does not cover every sequence".into());
            }
            if labels.iter().any(|&y| y >= self.num_classes) {
                return bad("label table entry out of range".into());
            }
        }
        if self.cluster_map.len() != self.num_classes
            || self.cluster_map.iter().any(|&k| k >= self.num_clusters)
        {
            return bad("cluster map invalid".into());
        }
        Ok(())
    }

    pub fn check_concept(&self, concept: usize) -> Result<()> {
        if concept >= self.num_concepts {
            return Err(Error::BadConcept {
                id: concept,
                count: self.num_concepts,
            });
        }
        Ok(())
    }

    /// Mixed-radix index of a valid sequence, slot 0 least significant.
    pub fn sequence_index(&self, seq: &[usize]) -> Result<usize> {
        if seq.len() != self.template.len() {
            return Err(Error::ArityMismatch {
                expected: self.template.len(),
                actual: seq.len(),
            });
        }
        let mut index = 0usize;
        let mut radix = 1usize;
        for (slot, &c) in self.template.iter().zip(seq) {
            self.check_concept(c)?;
            let pos = slot.binary_search(&c).map_err(|_| {
                Error::InvalidConfig(format!("concept {c} not allowed in its slot"))
            })?;
            index = index.wrapping_add(pos.wrapping_mul(radix));
            radix = radix.wrapping_mul(slot.len());
        }
        Ok(index)
    }

    pub fn sequence_at(&self, mut index: usize) -> Vec<usize> {
        self.template
            .iter()
            .map(|slot| {
                let c = slot[index % slot.len()];
                index /= slot.len();
                c
            })
            .collect()
    }

    /// Class of a valid concept sequence.
    pub fn label_of(&self, seq: &[usize]) -> Result<usize> {
        let index = self.sequence_index(seq)?;
        Ok(match &self.label_map {
            LabelMap::Table { labels } => labels[index],
            LabelMap::Hashed { key } => {
                let text: Vec<String> = seq.iter().map(|c| c.to_string()).collect();
                (stream_key(*key, &text.join(",")) % self.num_classes as u64) as usize
            }
        })
    }

    pub fn cluster_of(&self, class: usize) -> Result<usize> {
        self.cluster_map
            .get(class)
            .copied()
            .ok_or(Error::LabelOutOfRange {
                label: class,
                classes: self.num_classes,
            })
    }

    /// A concept sequence drawn uniformly from the template.
    pub fn sample_sequence(&self, rng: &mut RngStream) -> Vec<usize> {
        self.template.iter().map(|slot| slot[rng.below(slot.len())]).collect()
    }

    /// A sequence drawn uniformly among those with class `label`, or `None`
    /// if the class is empty.
    pub fn sample_sequence_of_class(&self, label: usize, rng: &mut RngStream) -> Result<Option<Vec<usize>>> {
        match &self.label_map {
            LabelMap::Table { labels } => {
                let members: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y == label)
                    .map(|(i, _)| i)
                    .collect();
                if members.is_empty() {
                    return Ok(None);
                }
                Ok(Some(self.sequence_at(members[rng.below(members.len())])))
            }
            LabelMap::Hashed { .. } => {
                // Each class holds ~1/C of a very large space; rejection terminates quickly.
                for _ in 0..10_000 * self.num_classes {
                    let seq = self.sample_sequence(rng);
                    if self.label_of(&seq)? == label {
                        return Ok(Some(seq));
                    }
                }
                Ok(None)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let world: ConceptWorld = serde_json::from_str(text)?;
        world.validate()?;
        Ok(world)
    }
}

/// Draws one unit of `modality` for `concept` from its manifestation distribution.
pub fn manifest(
    world: &ConceptWorld,
    concept: usize,
    modality: Modality,
    rng: &mut RngStream,
) -> Result<usize> {
    world.check_concept(concept)?;
    let support = &world.modality(modality).supports[concept];
    let weights: Vec<f64> = support.iter().map(|e| e.prob).collect();
    Ok(support[rng.categorical(&weights)].unit)
}

/// Like [`compose_instance`], also reporting which positions were replaced by noise.
pub fn compose_instance_traced(
    world: &ConceptWorld,
    concepts: &[usize],
    modality: Modality,
    rng: &mut RngStream,
) -> Result<(ModalityInstance, Vec<bool>)> {
    if concepts.len() != world.num_slots() {
        return Err(Error::ArityMismatch {
            expected: world.num_slots(),
            actual: concepts.len(),
        });
    }
    let spec = world.modality(modality);
    let mut units = Vec::with_capacity(concepts.len());
    let mut substituted = Vec::with_capacity(concepts.len());
    for (slot, &c) in concepts.iter().enumerate() {
        let mut unit = manifest(world, c, modality, rng)?;
        let noisy = rng.bernoulli(spec.slot_noise[slot]);
        if noisy {
            unit = rng.below(spec.vocab);
        }
        units.push(unit);
        substituted.push(noisy);
    }
    Ok((
        ModalityInstance {
            modality,
            units,
            latent: Some(concepts.to_vec()),
        },
        substituted,
    ))
}

/// Manifests each slot of `concepts` in template order, then replaces each
/// unit with a uniform vocabulary unit at the slot's noise rate.
pub fn compose_instance(
    world: &ConceptWorld,
    concepts: &[usize],
    modality: Modality,
    rng: &mut RngStream,
) -> Result<ModalityInstance> {
    compose_instance_traced(world, concepts, modality, rng).map(|(x, _)| x)
}

/// Jaccard overlap of the two instances' latent concept sets.
pub fn oracle_pair_score(x1: &ModalityInstance, x2: &ModalityInstance) -> Result<f64> {
    use std::collections::BTreeSet;
    let a: BTreeSet<usize> = x1.latent.as_ref().ok_or(Error::MissingLatent)?.iter().copied().collect();
    let b: BTreeSet<usize> = x2.latent.as_ref().ok_or(Error::MissingLatent)?.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Err(Error::MissingLatent);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}
