//! Deterministic subset sampling for the pre-training scaling study.
//!
//! Every record gets a priority `sha256(seed || record_id)`; a subset of
//! size `k` is the `k` records with the lowest priorities. Priorities do not
//! depend on the requested size, so for a fixed seed the subsets are nested:
//! the 1M split is a prefix of the 5M split is a prefix of the 10M split,
//! which keeps scaling curves comparable point to point.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

/// Keyed priority of a corpus record. Lower sorts earlier.
pub fn subset_priority(seed: u64, record_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(record_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 8+ bytes"))
}

/// Keyed priority of a dataset record during materialization. The dataset id
/// participates so identical record ids in different datasets decorrelate.
pub fn materialize_priority(seed: u64, dataset_id: &str, record_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(dataset_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(record_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 8+ bytes"))
}

/// A requested scaling split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub corpus_id: String,
    pub size: u64,
    pub seed: u64,
}

/// The materialized split: its spec plus the selected record ids in
/// ascending priority order (so a smaller split is literally a prefix of a
/// larger one drawn with the same seed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetManifest {
    pub spec: SubsetSpec,
    pub record_ids: Vec<String>,
}

impl SubsetManifest {
    /// Canonical file form: digest header over everything after it, then the
    /// spec line, then one record id per line.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let mut body = serde_json::to_string(&self.spec).expect("spec serializes");
        body.push('\n');
        for id in &self.record_ids {
            body.push_str(id);
            body.push('\n');
        }
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let mut file =
            fs::File::create(path).map_err(|source| CorpusError::io(path, source))?;
        file.write_all(format!("#sha256:{digest}\n").as_bytes())
            .and_then(|_| file.write_all(body.as_bytes()))
            .map_err(|source| CorpusError::io(path, source))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let contents = fs::read_to_string(path).map_err(|source| CorpusError::io(path, source))?;
        let manifest_err = |reason: String| CorpusError::Manifest {
            path: path.display().to_string(),
            reason,
        };
        let (header, body) = contents
            .split_once('\n')
            .ok_or_else(|| manifest_err("empty file".to_string()))?;
        let expected = header
            .strip_prefix("#sha256:")
            .ok_or_else(|| manifest_err("missing digest header".to_string()))?;
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != expected {
            return Err(manifest_err("digest mismatch".to_string()));
        }
        let mut lines = body.lines();
        let spec_line = lines
            .next()
            .ok_or_else(|| manifest_err("missing spec line".to_string()))?;
        let spec: SubsetSpec = serde_json::from_str(spec_line)
            .map_err(|err| manifest_err(format!("spec parse: {err}")))?;
        let record_ids: Vec<String> = lines.map(|l| l.to_string()).collect();
        if record_ids.len() as u64 != spec.size {
            return Err(manifest_err(format!(
                "spec declares {} records, file holds {}",
                spec.size,
                record_ids.len()
            )));
        }
        Ok(SubsetManifest { spec, record_ids })
    }
}

/// Reads a corpus id file: one record id per line, `#` lines and blanks
/// skipped. Duplicate ids are rejected, they would make priorities
/// ambiguous.
pub fn read_corpus_ids(path: impl AsRef<Path>) -> Result<Vec<String>, CorpusError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| CorpusError::io(path, source))?;
    let mut seen = std::collections::HashSet::new();
    let mut ids = Vec::new();
    for line in contents.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen.insert(line.to_string()) {
            return Err(CorpusError::DuplicateRecordId {
                id: line.to_string(),
            });
        }
        ids.push(line.to_string());
    }
    Ok(ids)
}

/// Draws the subset: the `spec.size` corpus records with the lowest keyed
/// priorities, in ascending priority order.
pub fn sample_subset(corpus_ids: &[String], spec: &SubsetSpec) -> Result<SubsetManifest, CorpusError> {
    if spec.size > corpus_ids.len() as u64 {
        return Err(CorpusError::Size {
            requested: spec.size,
            available: corpus_ids.len() as u64,
        });
    }
    let mut keyed: Vec<(u64, &String)> = corpus_ids
        .iter()
        .map(|id| (subset_priority(spec.seed, id), id))
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let record_ids = keyed
        .into_iter()
        .take(spec.size as usize)
        .map(|(_, id)| id.clone())
        .collect();
    Ok(SubsetManifest {
        spec: spec.clone(),
        record_ids,
    })
}
