//! Sample records and streaming ingestion with quarantine.
//!
//! The on-disk sample format is the de-facto instruction-tuning interchange
//! layout: one JSON object per line with `id`, `image` (string or list) and
//! `conversations` (`{"from": "human"|"gpt", "value": ...}`). Ingestion
//! validates structure record by record; bad records are quarantined into a
//! report with the reason, never silently dropped.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Speaker of one conversation turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// One validated instruction-tuning conversation.
///
/// Invariants: turns are non-empty, roles strictly alternate starting with
/// human and ending with assistant. Text-only datasets carry no images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub images: Vec<String>,
    pub turns: Vec<Turn>,
    pub source_dataset: String,
}

impl SampleRecord {
    /// Structural validation; returns the reason a record is unusable.
    pub fn validate(&self) -> Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("empty sample id".to_string());
        }
        if self.turns.is_empty() {
            return Err("no conversation turns".to_string());
        }
        if self.turns[0].role != Role::Human {
            return Err("first turn must be human".to_string());
        }
        for pair in self.turns.windows(2) {
            if pair[0].role == pair[1].role {
                return Err("role alternation violated".to_string());
            }
        }
        if self.turns.last().map(|t| t.role) != Some(Role::Assistant) {
            return Err("final turn must be assistant".to_string());
        }
        Ok(())
    }
}

/// `image` appears in the wild both as a single path and as a list.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(untagged)]
enum ImageField {
    #[default]
    Missing,
    One(String),
    Many(Vec<String>),
}

impl ImageField {
    fn into_vec(self) -> Vec<String> {
        match self {
            ImageField::Missing => Vec::new(),
            ImageField::One(path) => vec![path],
            ImageField::Many(paths) => paths,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawConversation {
    from: String,
    value: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSample {
    id: String,
    #[serde(default, skip_serializing_if = "image_is_missing")]
    image: ImageField,
    conversations: Vec<RawConversation>,
}

fn image_is_missing(f: &ImageField) -> bool {
    matches!(f, ImageField::Missing)
}

impl RawSample {
    fn into_record(self, dataset_id: &str) -> Result<SampleRecord, String> {
        let mut turns = Vec::with_capacity(self.conversations.len());
        for conv in self.conversations {
            let role = match conv.from.as_str() {
                "human" => Role::Human,
                "gpt" | "assistant" => Role::Assistant,
                other => return Err(format!("unknown role {other:?}")),
            };
            turns.push(Turn {
                role,
                text: conv.value,
            });
        }
        let record = SampleRecord {
            sample_id: self.id,
            images: self.image.into_vec(),
            turns,
            source_dataset: dataset_id.to_string(),
        };
        record.validate()?;
        Ok(record)
    }

    fn from_record(record: &SampleRecord) -> RawSample {
        RawSample {
            id: record.sample_id.clone(),
            image: match record.images.len() {
                0 => ImageField::Missing,
                _ => ImageField::Many(record.images.clone()),
            },
            conversations: record
                .turns
                .iter()
                .map(|t| RawConversation {
                    from: match t.role {
                        Role::Human => "human".to_string(),
                        Role::Assistant => "gpt".to_string(),
                    },
                    value: t.text.clone(),
                })
                .collect(),
        }
    }
}

/// A quarantined record and why it was excluded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordViolation {
    pub line: usize,
    pub sample_id: Option<String>,
    pub reason: String,
}

/// Outcome of one ingestion pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: u64,
    pub violations: Vec<RecordViolation>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Set for Text-only datasets: any record with images is quarantined.
    pub forbid_images: bool,
}

/// Streams validated records out of a reader, quarantining bad ones.
///
/// File-level problems (unreadable, invalid UTF-8) abort with an error;
/// record-level problems land in the report.
pub fn ingest_reader<R: Read>(
    reader: R,
    dataset_id: &str,
    options: IngestOptions,
    mut on_record: impl FnMut(SampleRecord),
) -> Result<IngestReport, CorpusError> {
    let mut report = IngestReport::default();
    let mut seen_ids = std::collections::HashSet::new();
    let buf = BufReader::new(reader);
    for (idx, line) in buf.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| {
            if source.kind() == std::io::ErrorKind::InvalidData {
                CorpusError::Format {
                    path: format!("{dataset_id} line {line_no}"),
                    reason: "invalid UTF-8".to_string(),
                }
            } else {
                CorpusError::io(dataset_id, source)
            }
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(err) => {
                report.violations.push(RecordViolation {
                    line: line_no,
                    sample_id: None,
                    reason: format!("json parse: {err}"),
                });
                continue;
            }
        };
        let sample_id = raw.id.clone();
        let record = match raw.into_record(dataset_id) {
            Ok(record) => record,
            Err(reason) => {
                report.violations.push(RecordViolation {
                    line: line_no,
                    sample_id: Some(sample_id),
                    reason,
                });
                continue;
            }
        };
        if !seen_ids.insert(record.sample_id.clone()) {
            report.violations.push(RecordViolation {
                line: line_no,
                sample_id: Some(record.sample_id),
                reason: "duplicate sample id".to_string(),
            });
            continue;
        }
        if options.forbid_images && !record.images.is_empty() {
            report.violations.push(RecordViolation {
                line: line_no,
                sample_id: Some(record.sample_id),
                reason: "text-only dataset carries images".to_string(),
            });
            continue;
        }
        report.accepted += 1;
        on_record(record);
    }
    Ok(report)
}

/// Reads a sample file, returning the validated records and the report.
pub fn ingest(
    path: impl AsRef<Path>,
    dataset_id: &str,
) -> Result<(Vec<SampleRecord>, IngestReport), CorpusError> {
    ingest_with_options(path, dataset_id, IngestOptions::default())
}

pub fn ingest_with_options(
    path: impl AsRef<Path>,
    dataset_id: &str,
    options: IngestOptions,
) -> Result<(Vec<SampleRecord>, IngestReport), CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::io(path, source))?;
    let mut records = Vec::new();
    let report = ingest_reader(file, dataset_id, options, |record| records.push(record))?;
    Ok((records, report))
}

/// Writes records back out in the interchange layout, one JSON object per
/// line. The encoding is canonical, so identical inputs produce identical
/// bytes.
pub fn write_records<'a, W: Write>(
    mut writer: W,
    records: impl IntoIterator<Item = &'a SampleRecord>,
) -> Result<u64, std::io::Error> {
    let mut written = 0u64;
    for record in records {
        let raw = RawSample::from_record(record);
        let line = serde_json::to_string(&raw).expect("sample serializes");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}
