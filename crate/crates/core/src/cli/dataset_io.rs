//! Dataset directories: `world.json` plus line-delimited `d1.jsonl`,
//! `d2.jsonl` and `d3.jsonl`. Paired records share a `pair_id`, modality 1
//! first. Latent concept sequences are never written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthworld::{ConceptWorld, DatasetTriple, Labeled, Modality, ModalityInstance, Pair};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub format_version: u32,
    pub modality: Modality,
    pub units: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<u64>,
}

impl Record {
    fn new(x: &ModalityInstance, label: Option<usize>, pair_id: Option<u64>) -> Self {
        Self {
            format_version: DATASET_FORMAT_VERSION,
            modality: x.modality,
            units: x.units.clone(),
            label,
            pair_id,
        }
    }

    pub fn instance(&self) -> ModalityInstance {
        ModalityInstance::new(self.modality, self.units.clone())
    }
}

/// Parses one line. Version is checked before the rest of the schema so an
/// unknown version is reported as such.
pub fn parse_record(line: &str) -> Result<Record> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    if let Some(v) = value.get("format_version").and_then(|v| v.as_u64()) {
        if v != u64::from(DATASET_FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: v.min(u64::from(u32::MAX)) as u32,
                supported: DATASET_FORMAT_VERSION,
            });
        }
    }
    Ok(serde_json::from_value(value)?)
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema { path: path.to_path_buf(), line, message: message.into() }
}

/// Non-empty lines of `path` parsed as records, with 1-based line numbers.
fn read_records(path: &Path) -> Result<Vec<(usize, Record)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(line).map_err(|e| match e {
            Error::VersionMismatch { .. } => e,
            other => schema(path, i + 1, other.to_string()),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn check_units(world: &ConceptWorld, path: &Path, line: usize, r: &Record) -> Result<()> {
    if r.units.is_empty() {
        return Err(schema(path, line, "record has no units"));
    }
    let vocab = world.vocab(r.modality);
    if let Some(u) = r.units.iter().find(|&&u| u >= vocab) {
        return Err(schema(path, line, format!("unit {u} outside modality-{} vocabulary of {vocab}", r.modality)));
    }
    Ok(())
}

pub fn read_labeled(path: &Path, modality: Modality, world: &ConceptWorld) -> Result<Vec<Labeled>> {
    read_records(path)?
        .into_iter()
        .map(|(line, r)| {
            if r.modality != modality {
                return Err(schema(path, line, format!("expected modality {modality}, found {}", r.modality)));
            }
            if r.pair_id.is_some() {
                return Err(schema(path, line, "labeled record carries a pair_id"));
            }
            let label = r.label.ok_or_else(|| schema(path, line, "missing label"))?;
            if label >= world.num_classes {
                return Err(schema(path, line, format!("label {label} >= class count {}", world.num_classes)));
            }
            check_units(world, path, line, &r)?;
            Ok(Labeled { instance: r.instance(), label })
        })
        .collect()
}

pub fn read_pairs(path: &Path, world: &ConceptWorld) -> Result<Vec<Pair>> {
    let mut halves: BTreeMap<u64, (usize, [Option<ModalityInstance>; 2])> = BTreeMap::new();
    let mut order = Vec::new();
    for (line, r) in read_records(path)? {
        if r.label.is_some() {
            return Err(schema(path, line, "paired record carries a label"));
        }
        let id = r.pair_id.ok_or_else(|| schema(path, line, "missing pair_id"))?;
        check_units(world, path, line, &r)?;
        let entry = halves.entry(id).or_insert_with(|| {
            order.push(id);
            (line, [None, None])
        });
        let slot = &mut entry.1[r.modality.index()];
        if slot.is_some() {
            return Err(schema(path, line, format!("pair {id} has two modality-{} records", r.modality)));
        }
        *slot = Some(r.instance());
    }
    order
        .into_iter()
        .map(|id| match halves.remove(&id).expect("recorded") {
            (_, [Some(x1), Some(x2)]) => Ok(Pair { pair_id: id, x1, x2 }),
            (line, _) => Err(schema(path, line, format!("pair {id} is missing a modality"))),
        })
        .collect()
}

fn lines<T>(items: &[T], to_records: impl Fn(&T) -> Vec<Record>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        for r in to_records(item) {
            writeln!(out, "{}", serde_json::to_string(&r)?).expect("string write");
        }
    }
    Ok(out)
}

pub fn labeled_jsonl(items: &[Labeled]) -> Result<String> {
    lines(items, |l| vec![Record::new(&l.instance, Some(l.label), None)])
}

pub fn pairs_jsonl(items: &[Pair]) -> Result<String> {
    lines(items, |p| {
        vec![
            Record::new(&p.x1, None, Some(p.pair_id)),
            Record::new(&p.x2, None, Some(p.pair_id)),
        ]
    })
}

pub struct DataPaths {
    pub world: PathBuf,
    pub d1: PathBuf,
    pub d2: PathBuf,
    pub d3: PathBuf,
}

impl DataPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            world: dir.join("world.json"),
            d1: dir.join("d1.jsonl"),
            d2: dir.join("d2.jsonl"),
            d3: dir.join("d3.jsonl"),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_dataset_dir(dir: &Path, world: &ConceptWorld, data: &DatasetTriple) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = DataPaths::new(dir);
    write(&p.world, &world.to_json()?)?;
    write(&p.d1, &labeled_jsonl(&data.d1)?)?;
    write(&p.d2, &labeled_jsonl(&data.d2)?)?;
    write(&p.d3, &pairs_jsonl(&data.d3)?)
}

pub fn read_world(path: &Path) -> Result<ConceptWorld> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConceptWorld::from_json(&text)
}

pub fn read_dataset_dir(dir: &Path) -> Result<(ConceptWorld, DatasetTriple)> {
    let p = DataPaths::new(dir);
    let world = read_world(&p.world)?;
    let data = DatasetTriple {
        d1: read_labeled(&p.d1, Modality::One, &world)?,
        d2: read_labeled(&p.d2, Modality::Two, &world)?,
        d3: read_pairs(&p.d3, &world)?,
    };
    Ok((world, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::rng_fork;
    use crate::synthworld::{build_world, sample_datasets, DatasetSizes, WorldConfig};

    fn setup() -> (ConceptWorld, DatasetTriple) {
        let w = build_world(&WorldConfig::default(), &rng_fork(0, "w")).unwrap();
        let d = sample_datasets(&w, DatasetSizes { n1: 20, n2: 15, n3: 10 }, &rng_fork(0, "d")).unwrap();
        (w, d)
    }

    #[test]
    fn directory_round_trip() {
        let (w, d) = setup();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &w, &d).unwrap();
        let (w2, d2) = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(w2, w);
        assert_eq!(d2, d.without_latent());
    }

    #[test]
    fn empty_files_are_empty_sets() {
        let (w, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &w, &DatasetTriple::default()).unwrap();
        let (_, d) = read_dataset_dir(dir.path()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn label_out_of_range_names_the_line() {
        let (w, d) = setup();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &w, &d).unwrap();
        let path = dir.path().join("d1.jsonl");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"format_version\":1,\"modality\":1,\"units\":[1,2],\"label\":40}\n");
        std::fs::write(&path, text).unwrap();
        match read_dataset_dir(dir.path()) {
            Err(Error::Schema { line, message, .. }) => {
                assert_eq!(line, 21);
                assert!(message.contains("label 40"), "{message}");
            }
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn malformed_records_rejected() {
        let (w, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let cases = [
            ("{\"format_version\":2,\"modality\":1,\"units\":[1],\"label\":0}", "version"),
            ("{\"format_version\":1,\"modality\":1,\"units\":[1],\"label\":0,\"extra\":1}", "schema"),
            ("{\"format_version\":1,\"modality\":2,\"units\":[1],\"label\":0}", "schema"),
            ("{\"format_version\":1,\"modality\":1,\"units\":[999],\"label\":0}", "schema"),
            ("not json", "schema"),
        ];
        for (line, kind) in cases {
            std::fs::write(&path, format!("\n{line}\n")).unwrap();
            let r = read_labeled(&path, Modality::One, &w);
            match (kind, r) {
                ("version", Err(Error::VersionMismatch { found: 2, .. })) => {}
                ("schema", Err(Error::Schema { line: 2, .. })) => {}
                (_, other) => panic!("{line}: {:?}", other.map(|_| ())),
            }
        }
    }

    #[test]
    fn incomplete_pairs_rejected() {
        let (w, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d3.jsonl");
        std::fs::write(&path, "{\"format_version\":1,\"modality\":1,\"units\":[1],\"pair_id\":4}\n").unwrap();
        assert!(matches!(read_pairs(&path, &w), Err(Error::Schema { line: 1, .. })));
    }
}
