use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::mean_std;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Fusion,
    Retrieval,
    Colearn,
}

/// Flat metric names to values, e.g. `recall@5`, `mean_rank`, `accuracy1`.
pub type Metrics = BTreeMap<String, f64>;

/// Stable JSON report. For multi-seed runs `metrics` holds the mean of each
/// per-seed value and `<name>_std` its population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub task: Task,
    pub config_fingerprint: String,
    pub metrics: Metrics,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Metrics>,
}

impl MetricReport {
    pub fn single(task: Task, config_fingerprint: String, seed: u64, metrics: Metrics) -> Self {
        Self {
            task,
            config_fingerprint,
            metrics,
            seeds: vec![seed],
            per_seed: Vec::new(),
        }
    }

    pub fn aggregate(task: Task, config_fingerprint: String, seeds: Vec<u64>, per_seed: Vec<Metrics>) -> Self {
        let mut metrics = Metrics::new();
        let names: std::collections::BTreeSet<&String> = per_seed.iter().flat_map(|m| m.keys()).collect();
        for name in names {
            let values: Vec<f64> = per_seed.iter().filter_map(|m| m.get(name).copied()).collect();
            let (mean, std) = mean_std(&values);
            metrics.insert(name.clone(), mean);
            metrics.insert(format!("{name}_std"), std);
        }
        Self {
            task,
            config_fingerprint,
            metrics,
            seeds,
            per_seed,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// First 16 hex digits of the SHA-256 of `value` serialized with sorted keys.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    // Value's map is ordered, so this is canonical.
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_uses_population_std() {
        let per = vec![
            Metrics::from([("a".to_string(), 1.0)]),
            Metrics::from([("a".to_string(), 3.0)]),
        ];
        let r = MetricReport::aggregate(Task::Fusion, "f".into(), vec![0, 1], per);
        assert_eq!(r.get("a"), Some(2.0));
        assert_eq!(r.get("a_std"), Some(1.0));
        let back: MetricReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn fingerprint_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x":1,"y":[2,3]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[2,3],"x":1}"#).unwrap();
        assert_eq!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
        assert_eq!(fingerprint(&a).unwrap().len(), 16);
        let c: serde_json::Value = serde_json::from_str(r#"{"x":2,"y":[2,3]}"#).unwrap();
        assert_ne!(fingerprint(&a).unwrap(), fingerprint(&c).unwrap());
    }
}
