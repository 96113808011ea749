//! Dataset taxonomy and the catalog of candidate SFT datasets.
//!
//! The registry is loaded once from a line-delimited manifest and treated as
//! immutable for the rest of a run (the one sanctioned mutation is
//! [`reclassify`], which retires a mixed dataset and appends its caption and
//! conversation splits). A bundled default manifest carries the 37-dataset
//! candidate catalog across the 12 default categories.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SampleRecord;

const DEFAULT_MANIFEST: &str = include_str!("../data/default_registry.jsonl");

/// Names of the default taxonomy, in iteration order.
pub const DEFAULT_CATEGORY_NAMES: [&str; 12] = [
    "Captioning",
    "General QA",
    "Science",
    "Chart",
    "Mathematics",
    "Knowledge",
    "OCR",
    "Document",
    "Grounding",
    "Conversation",
    "Text-only",
    "Screen",
];

/// A taxonomy category with its position in the default iteration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub ordinal: usize,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordered list of categories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    categories: Vec<Category>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            categories: DEFAULT_CATEGORY_NAMES
                .iter()
                .enumerate()
                .map(|(ordinal, name)| Category {
                    name: (*name).to_string(),
                    ordinal,
                })
                .collect(),
        }
    }
}

impl Taxonomy {
    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn contains(&self, category: &Category) -> bool {
        self.categories.contains(category)
    }
}

/// Which half of a reclassified dataset a descriptor represents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Cap,
    Conv,
    #[default]
    None,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Cap => f.write_str("cap"),
            SplitTag::Conv => f.write_str("conv"),
            SplitTag::None => f.write_str("none"),
        }
    }
}

/// One candidate dataset in the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    pub display_name: String,
    pub category: Category,
    pub split_tag: SplitTag,
    pub record_count: u64,
    pub source_uri: String,
    pub notes: String,
    /// Set on descriptors produced by [`reclassify`].
    pub parent_id: Option<String>,
    /// Parents retired by reclassification stay in the registry for lineage
    /// but never show up as candidates.
    pub superseded: bool,
}

/// Raw manifest row. Unknown fields are rejected; the count is parsed signed
/// so a negative value surfaces as a validation error rather than a parse
/// error.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRow {
    id: String,
    name: String,
    category: String,
    #[serde(default)]
    split: SplitTag,
    count: i64,
    #[serde(default)]
    uri: String,
    #[serde(default)]
    notes: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("io error reading manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate dataset id {0:?}")]
    DuplicateId(String),
    #[error("dataset {id:?} references unknown category {category:?}")]
    UnknownCategory { id: String, category: String },
    #[error("dataset {id:?} has negative record count {count}")]
    NegativeCount { id: String, count: i64 },
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("dataset {0:?} is already split or superseded")]
    AlreadySplit(String),
    #[error("split rule left record {sample_id:?} of dataset {dataset:?} unassigned")]
    Rule { dataset: String, sample_id: String },
    #[error("split of {dataset:?} classified {classified} records but the descriptor declares {declared}")]
    CountMismatch {
        dataset: String,
        classified: u64,
        declared: u64,
    },
}

/// The taxonomy plus the candidate datasets, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Registry {
    taxonomy: Taxonomy,
    datasets: Vec<DatasetDescriptor>,
}

impl Registry {
    /// Parses and validates a manifest from its textual form.
    pub fn from_manifest_str(manifest: &str) -> Result<Self, RegistryError> {
        let taxonomy = Taxonomy::default();
        let mut datasets = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in manifest.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: ManifestRow =
                serde_json::from_str(line).map_err(|source| RegistryError::Parse {
                    line: idx + 1,
                    source,
                })?;
            if row.count < 0 {
                return Err(RegistryError::NegativeCount {
                    id: row.id,
                    count: row.count,
                });
            }
            if !seen.insert(row.id.clone()) {
                return Err(RegistryError::DuplicateId(row.id));
            }
            let category = taxonomy
                .find(&row.category)
                .cloned()
                .ok_or_else(|| RegistryError::UnknownCategory {
                    id: row.id.clone(),
                    category: row.category.clone(),
                })?;
            datasets.push(DatasetDescriptor {
                id: row.id,
                display_name: row.name,
                category,
                split_tag: row.split,
                record_count: row.count as u64,
                source_uri: row.uri,
                notes: row.notes,
                parent_id: None,
                superseded: false,
            });
        }
        Ok(Registry { taxonomy, datasets })
    }

    /// Loads a registry manifest from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let manifest = fs::read_to_string(path)?;
        Self::from_manifest_str(&manifest)
    }

    /// The catalog shipped with the crate: the 37 candidate datasets across
    /// the 12 default categories.
    pub fn bundled_default() -> Self {
        Self::from_manifest_str(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// All descriptors, including superseded parents.
    pub fn datasets(&self) -> &[DatasetDescriptor] {
        &self.datasets
    }

    /// Number of live (non-superseded) datasets.
    pub fn dataset_count(&self) -> usize {
        self.datasets.iter().filter(|d| !d.superseded).count()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetDescriptor> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Live candidates of one category, in manifest order.
    pub fn candidates_in(&self, category: &Category) -> Vec<&DatasetDescriptor> {
        self.datasets
            .iter()
            .filter(|d| !d.superseded && &d.category == category)
            .collect()
    }

    /// Stable digest over the taxonomy and every dataset row, used to detect
    /// a registry swap between a run and its resume.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            taxonomy: Vec<&'a str>,
            datasets: &'a [DatasetDescriptor],
        }
        let canon = Canon {
            taxonomy: self
                .taxonomy
                .categories()
                .iter()
                .map(|c| c.name.as_str())
                .collect(),
            datasets: &self.datasets,
        };
        let bytes = serde_json::to_vec(&canon).expect("registry serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Splits a mixed dataset into its caption and conversation halves.
///
/// The rule classifies each record; `None` from the rule means the record is
/// not covered and the whole operation fails. The parent descriptor is kept
/// but marked superseded, and two child descriptors are appended: the cap
/// child files under Captioning, the conv child under Conversation, with
/// record counts taken from the classification.
pub fn reclassify<'a, F>(
    registry: &mut Registry,
    dataset_id: &str,
    records: impl IntoIterator<Item = &'a SampleRecord>,
    mut rule: F,
) -> Result<(DatasetDescriptor, DatasetDescriptor), RegistryError>
where
    F: FnMut(&SampleRecord) -> Option<SplitTag>,
{
    let parent = registry
        .get(dataset_id)
        .ok_or_else(|| RegistryError::UnknownDataset(dataset_id.to_string()))?
        .clone();
    if parent.superseded || parent.split_tag != SplitTag::None {
        return Err(RegistryError::AlreadySplit(parent.id));
    }

    let mut cap_count = 0u64;
    let mut conv_count = 0u64;
    for record in records {
        match rule(record) {
            Some(SplitTag::Cap) => cap_count += 1,
            Some(SplitTag::Conv) => conv_count += 1,
            Some(SplitTag::None) | None => {
                return Err(RegistryError::Rule {
                    dataset: parent.id,
                    sample_id: record.sample_id.clone(),
                });
            }
        }
    }
    let classified = cap_count + conv_count;
    if classified != parent.record_count {
        return Err(RegistryError::CountMismatch {
            dataset: parent.id,
            classified,
            declared: parent.record_count,
        });
    }

    let child = |suffix: &str, tag: SplitTag, category: &str, count: u64| DatasetDescriptor {
        id: format!("{}-{}", parent.id, suffix),
        display_name: format!("{} ({})", parent.display_name, suffix),
        category: registry
            .taxonomy()
            .find(category)
            .cloned()
            .expect("default taxonomy has cap/conv categories"),
        split_tag: tag,
        record_count: count,
        source_uri: parent.source_uri.clone(),
        notes: parent.notes.clone(),
        parent_id: Some(parent.id.clone()),
        superseded: false,
    };
    let cap = child("cap", SplitTag::Cap, "Captioning", cap_count);
    let conv = child("conv", SplitTag::Conv, "Conversation", conv_count);
    for c in [&cap, &conv] {
        if registry.contains(&c.id) {
            return Err(RegistryError::DuplicateId(c.id.clone()));
        }
    }

    let parent_idx = registry
        .datasets
        .iter()
        .position(|d| d.id == dataset_id)
        .expect("parent looked up above");
    registry.datasets[parent_idx].superseded = true;
    registry.datasets.push(cap.clone());
    registry.datasets.push(conv.clone());
    Ok((cap, conv))
}

/// Built-in split rule: a record with more than one exchange is
/// conversation-style, otherwise caption-style. Total, so it never yields a
/// rule error.
pub fn caption_conversation_rule(record: &SampleRecord) -> Option<SplitTag> {
    if record.turns.len() > 2 {
        Some(SplitTag::Conv)
    } else {
        Some(SplitTag::Cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Role, SampleRecord, Turn};

    fn sample(id: &str, exchanges: usize) -> SampleRecord {
        let mut turns = Vec::new();
        for i in 0..exchanges {
            turns.push(Turn {
                role: Role::Human,
                text: format!("question {i}"),
            });
            turns.push(Turn {
                role: Role::Assistant,
                text: format!("answer {i}"),
            });
        }
        SampleRecord {
            sample_id: id.to_string(),
            images: vec!["img.jpg".to_string()],
            turns,
            source_dataset: "mixed".to_string(),
        }
    }

    #[test]
    fn bundled_default_has_37_datasets_in_12_categories() {
        let registry = Registry::bundled_default();
        assert_eq!(registry.dataset_count(), 37);
        assert_eq!(registry.taxonomy().len(), 12);
        let total: usize = registry
            .taxonomy()
            .categories()
            .iter()
            .map(|c| registry.candidates_in(c).len())
            .sum();
        assert_eq!(total, 37);
    }

    #[test]
    fn bundled_default_category_shapes() {
        let registry = Registry::bundled_default();
        let knowledge = registry.taxonomy().find("Knowledge").unwrap();
        let names: Vec<_> = registry
            .candidates_in(knowledge)
            .iter()
            .map(|d| d.display_name.clone())
            .collect();
        assert_eq!(names, vec!["KVQA"]);

        let captioning = registry.taxonomy().find("Captioning").unwrap();
        let caps = registry.candidates_in(captioning);
        assert_eq!(caps.len(), 6);
        assert_eq!(caps[0].display_name, "ShareGPT4V");
    }

    #[test]
    fn empty_manifest_keeps_full_taxonomy() {
        let registry = Registry::from_manifest_str("").unwrap();
        assert_eq!(registry.dataset_count(), 0);
        assert_eq!(registry.taxonomy().len(), 12);
        let science = registry.taxonomy().find("Science").unwrap();
        assert!(registry.candidates_in(science).is_empty());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let manifest = concat!(
            r#"{"id": "svit-cap", "name": "A", "category": "Captioning", "count": 1}"#,
            "\n",
            r#"{"id": "svit-cap", "name": "B", "category": "Captioning", "count": 2}"#,
        );
        match Registry::from_manifest_str(manifest) {
            Err(RegistryError::DuplicateId(id)) => assert_eq!(id, "svit-cap"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_is_rejected() {
        let manifest = r#"{"id": "x", "name": "X", "category": "Cooking", "count": 1}"#;
        assert!(matches!(
            Registry::from_manifest_str(manifest),
            Err(RegistryError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn negative_count_is_rejected() {
        let manifest = r#"{"id": "x", "name": "X", "category": "Science", "count": -5}"#;
        assert!(matches!(
            Registry::from_manifest_str(manifest),
            Err(RegistryError::NegativeCount { .. })
        ));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let manifest = r#"{"id": "x", "name": "X", "category": "Science", "count": 1, "extra": 1}"#;
        assert!(matches!(
            Registry::from_manifest_str(manifest),
            Err(RegistryError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn candidates_in_is_stable() {
        let registry = Registry::bundled_default();
        let chart = registry.taxonomy().find("Chart").unwrap().clone();
        let first: Vec<_> = registry
            .candidates_in(&chart)
            .iter()
            .map(|d| d.id.clone())
            .collect();
        let second: Vec<_> = registry
            .candidates_in(&chart)
            .iter()
            .map(|d| d.id.clone())
            .collect();
        assert_eq!(first, second);
    }

    #[test]
    fn reclassify_splits_counts_exactly() {
        let manifest = r#"{"id": "mixed", "name": "Mixed", "category": "Conversation", "count": 10}"#;
        let mut registry = Registry::from_manifest_str(manifest).unwrap();
        let records: Vec<_> = (0..10)
            .map(|i| sample(&format!("r{i}"), if i < 6 { 1 } else { 2 }))
            .collect();
        let (cap, conv) =
            reclassify(&mut registry, "mixed", &records, caption_conversation_rule).unwrap();
        assert_eq!(cap.record_count, 6);
        assert_eq!(conv.record_count, 4);
        assert_eq!(cap.record_count + conv.record_count, 10);
        assert_eq!(cap.parent_id.as_deref(), Some("mixed"));
        assert_eq!(conv.parent_id.as_deref(), Some("mixed"));
        assert_eq!(cap.category.name, "Captioning");
        assert_eq!(conv.category.name, "Conversation");

        // Parent is retired but retained.
        let parent = registry.get("mixed").unwrap();
        assert!(parent.superseded);
        let conversation = registry.taxonomy().find("Conversation").unwrap();
        let ids: Vec<_> = registry
            .candidates_in(conversation)
            .iter()
            .map(|d| d.id.clone())
            .collect();
        assert_eq!(ids, vec!["mixed-conv"]);
    }

    #[test]
    fn reclassify_degenerate_split_keeps_zero_count_child() {
        let manifest = r#"{"id": "mixed", "name": "Mixed", "category": "Conversation", "count": 4}"#;
        let mut registry = Registry::from_manifest_str(manifest).unwrap();
        let records: Vec<_> = (0..4).map(|i| sample(&format!("r{i}"), 1)).collect();
        let (cap, conv) =
            reclassify(&mut registry, "mixed", &records, caption_conversation_rule).unwrap();
        assert_eq!(cap.record_count, 4);
        assert_eq!(conv.record_count, 0);
    }

    #[test]
    fn reclassify_partial_rule_fails() {
        let manifest = r#"{"id": "mixed", "name": "Mixed", "category": "Conversation", "count": 2}"#;
        let mut registry = Registry::from_manifest_str(manifest).unwrap();
        let records: Vec<_> = (0..2).map(|i| sample(&format!("r{i}"), 2)).collect();
        let result = reclassify(&mut registry, "mixed", &records, |r| {
            if r.sample_id == "r0" {
                Some(SplitTag::Conv)
            } else {
                None
            }
        });
        assert!(matches!(result, Err(RegistryError::Rule { .. })));
        // A failed split must not mutate the registry.
        assert!(!registry.get("mixed").unwrap().superseded);
    }

    #[test]
    fn reclassify_twice_fails() {
        let manifest = r#"{"id": "mixed", "name": "Mixed", "category": "Conversation", "count": 1}"#;
        let mut registry = Registry::from_manifest_str(manifest).unwrap();
        let records = vec![sample("r0", 1)];
        reclassify(&mut registry, "mixed", &records, caption_conversation_rule).unwrap();
        let again = reclassify(&mut registry, "mixed", &records, caption_conversation_rule);
        assert!(matches!(again, Err(RegistryError::AlreadySplit(_))));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Registry::bundled_default();
        let b = Registry::bundled_default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let manifest = r#"{"id": "x", "name": "X", "category": "Science", "count": 1}"#;
        let c = Registry::from_manifest_str(manifest).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
