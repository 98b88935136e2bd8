use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignspace::AlignConfig;
use crate::encoders::{EncoderDims, Pooling};
use crate::error::{Error, Result};
use crate::evalharness::{fingerprint, ColearnConfig, DEFAULT_KS};
use crate::model::ModelShape;
use crate::synthworld::{ConceptWorld, DatasetSizes, WorldConfig};
use crate::trainer::TrainConfig;

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "BRAINISH_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub dims: EncoderDims,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub colearn: ColearnConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            colearn: ColearnConfig::default(),
        }
    }
}

/// Everything a pipeline run needs. `train.seed` seeds world generation,
/// dataset sampling, initialization and training.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub datasets: DatasetSizes,
    pub encoder: EncoderConfig,
    pub align: AlignConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Schema {
                path: path.to_path_buf(),
                line: j.line(),
                message: j.to_string(),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.align.validate()?;
        self.train.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::InvalidConfig("eval.ks must be non-empty and positive".into()));
        }
        self.eval.colearn.validate()
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Applies the seed precedence: explicit flag, then the environment, then the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<()> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
                Error::InvalidConfig(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?),
            Err(_) => None,
        };
        if let Some(seed) = flag.or(env) {
            self.train.seed = seed;
        }
        Ok(())
    }

    /// Training configuration with the alignment section filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            align: self.align.clone(),
            ..self.train.clone()
        }
    }

    pub fn model_shape(&self, world: &ConceptWorld) -> ModelShape {
        ModelShape::for_world(world, self.encoder.dims, self.encoder.pooling)
    }

    pub fn fingerprint(&self) -> Result<String> {
        fingerprint(self)
    }
}
