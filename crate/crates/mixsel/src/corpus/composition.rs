//! Mixture compositions: ordered lists of dataset entries with lineage and a
//! content digest.
//!
//! A composition is the unit that gets materialized, trained on, and scored.
//! Its `content_hash` covers the entries alone (id + take, in order), so two
//! compositions with the same entries share cached evaluation results no
//! matter how they were named or derived.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::registry::Registry;

/// How much of a dataset an entry pulls in: everything, or the first `n`
/// records under the run's priority shuffle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Take {
    All,
    Count(u64),
}

// Serialized as the literal string "all" or a bare integer.
impl Serialize for Take {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Take::All => serializer.serialize_str("all"),
            Take::Count(n) => serializer.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Take {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::String(s) if s == "all" => Ok(Take::All),
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(Take::Count)
                .ok_or_else(|| D::Error::custom("take must be a non-negative integer")),
            other => Err(D::Error::custom(format!(
                "take must be \"all\" or an integer, got {other}"
            ))),
        }
    }
}

/// One dataset reference inside a composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub dataset: String,
    pub take: Take,
}

/// Where a composition came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent_hash: String,
    pub added: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<String>,
}

/// An ordered mixture of datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub name: String,
    entries: Vec<Entry>,
    pub lineage: Option<Lineage>,
    content_hash: String,
}

impl Composition {
    /// Builds a composition, rejecting duplicate dataset ids.
    pub fn new(
        name: impl Into<String>,
        entries: Vec<(String, Take)>,
    ) -> Result<Self, CorpusError> {
        let entries: Vec<Entry> = entries
            .into_iter()
            .map(|(dataset, take)| Entry { dataset, take })
            .collect();
        check_no_duplicates(&entries)?;
        Ok(Composition {
            name: name.into(),
            content_hash: hash_entries(&entries),
            entries,
            lineage: None,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Composition::new(name, Vec::new()).expect("empty composition is valid")
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, dataset: &str) -> bool {
        self.entries.iter().any(|e| e.dataset == dataset)
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.dataset.as_str())
    }

    /// Digest of the canonical entry serialization. Changes iff the entries
    /// change.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    /// Appends entries, recording lineage against this composition. Used both
    /// by [`compose`] (after registry validation) and by ledger replay, which
    /// trusts the recorded round instead of a registry.
    pub fn extended(
        &self,
        name: impl Into<String>,
        additions: &[(String, Take)],
    ) -> Result<Self, CorpusError> {
        let mut entries = self.entries.clone();
        entries.extend(additions.iter().map(|(dataset, take)| Entry {
            dataset: dataset.clone(),
            take: *take,
        }));
        check_no_duplicates(&entries)?;
        Ok(Composition {
            name: name.into(),
            content_hash: hash_entries(&entries),
            entries,
            lineage: Some(Lineage {
                parent_hash: self.content_hash.clone(),
                added: additions.iter().map(|(d, _)| d.clone()).collect(),
                removed: Vec::new(),
            }),
        })
    }

    /// Writes the canonical two-line manifest: a digest header over the
    /// serialized body, then the body itself.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let body = serde_json::to_string(self).expect("composition serializes");
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let contents = format!("#sha256:{digest}\n{body}\n");
        fs::write(path, contents).map_err(|source| CorpusError::io(path, source))
    }

    /// Reads a manifest back, verifying the digest header.
    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let contents = fs::read_to_string(path).map_err(|source| CorpusError::io(path, source))?;
        let manifest_err = |reason: &str| CorpusError::Manifest {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let mut lines = contents.lines();
        let header = lines.next().ok_or_else(|| manifest_err("empty file"))?;
        let expected = header
            .strip_prefix("#sha256:")
            .ok_or_else(|| manifest_err("missing digest header"))?;
        let body = lines.next().ok_or_else(|| manifest_err("missing body"))?;
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != expected {
            return Err(manifest_err("digest mismatch"));
        }
        let composition: Composition = serde_json::from_str(body)
            .map_err(|err| manifest_err(&format!("body parse: {err}")))?;
        if composition.content_hash != hash_entries(&composition.entries) {
            return Err(manifest_err("content hash does not match entries"));
        }
        check_no_duplicates(&composition.entries)?;
        Ok(composition)
    }
}

fn check_no_duplicates(entries: &[Entry]) -> Result<(), CorpusError> {
    let mut seen = std::collections::HashSet::new();
    for entry in entries {
        if !seen.insert(entry.dataset.as_str()) {
            return Err(CorpusError::DuplicateDataset(entry.dataset.clone()));
        }
    }
    Ok(())
}

fn hash_entries(entries: &[Entry]) -> String {
    let canonical = serde_json::to_vec(entries).expect("entries serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// Concatenates additions onto a base mixture, validating them against the
/// registry (known id, no collision, take within the record count).
pub fn compose(
    registry: &Registry,
    name: impl Into<String>,
    base: Option<&Composition>,
    additions: &[(String, Take)],
) -> Result<Composition, CorpusError> {
    for (dataset, take) in additions {
        let descriptor = registry
            .get(dataset)
            .ok_or_else(|| CorpusError::UnknownDataset(dataset.clone()))?;
        if let Take::Count(n) = take {
            if *n > descriptor.record_count {
                return Err(CorpusError::TakeExceedsCount {
                    dataset: dataset.clone(),
                    take: *n,
                    count: descriptor.record_count,
                });
            }
        }
    }
    match base {
        Some(base) => base.extended(name, additions),
        None => {
            let mut composition = Composition::empty(name);
            composition = composition.extended(composition.name.clone(), additions)?;
            composition.lineage = None;
            Ok(composition)
        }
    }
}

/// Dataset id of the detailed-description split inside the stock LLaVA-1.5
/// 665K mixture, the entry [`build_improved_baseline`] substitutes away.
pub const LLAVA_DETAIL_SPLIT_ID: &str = "llava-detail-23k";

/// Swaps the detailed-description entry of the 665K mixture for higher
/// quality caption data, keeping its position. Fails if no such entry is
/// present (so applying it twice fails the second time).
pub fn build_improved_baseline(
    llava665k: &Composition,
    replacement_dataset: &str,
) -> Result<Composition, CorpusError> {
    build_improved_baseline_with(llava665k, replacement_dataset, LLAVA_DETAIL_SPLIT_ID)
}

pub fn build_improved_baseline_with(
    base: &Composition,
    replacement_dataset: &str,
    detail_split_id: &str,
) -> Result<Composition, CorpusError> {
    let position = base
        .entries
        .iter()
        .position(|e| e.dataset == detail_split_id)
        .ok_or(CorpusError::MissingSplit)?;
    if base.contains(replacement_dataset) {
        return Err(CorpusError::DuplicateDataset(
            replacement_dataset.to_string(),
        ));
    }
    let mut entries = base.entries.clone();
    entries[position] = Entry {
        dataset: replacement_dataset.to_string(),
        take: Take::All,
    };
    Ok(Composition {
        name: format!("{}-improved", base.name),
        content_hash: hash_entries(&entries),
        entries,
        lineage: Some(Lineage {
            parent_hash: base.content_hash.clone(),
            added: vec![replacement_dataset.to_string()],
            removed: vec![detail_split_id.to_string()],
        }),
    })
}

/// The stock LLaVA-1.5 665K instruction mixture, as a composition over its
/// component datasets. Counts live in whatever registry or data directory a
/// run resolves these ids against; the mixture itself is id-level.
pub fn llava_665k() -> Composition {
    let components = [
        "llava-conv-58k",
        "llava-complex-77k",
        LLAVA_DETAIL_SPLIT_ID,
        "gqa",
        "okvqa",
        "a-okvqa",
        "ocr-vqa",
        "textcaps",
        "vg-grounding",
        "refcoco-dialog",
        "sharegpt-40k",
    ];
    Composition::new(
        "llava-1.5-665k",
        components
            .iter()
            .map(|id| (id.to_string(), Take::All))
            .collect(),
    )
    .expect("stock mixture has no duplicates")
}
