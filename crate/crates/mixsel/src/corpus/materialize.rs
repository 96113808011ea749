//! Turns a composition into a concrete training file.
//!
//! Every entry's source file is ingested, `take` counts are honored by
//! keeping the records with the lowest keyed priorities, and the union is
//! written in one globally shuffled, seed-deterministic order. Re-running
//! with the same inputs produces byte-identical output.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::composition::{Composition, Take};
use super::record::{ingest_with_options, write_records, IngestOptions, SampleRecord};
use super::subset::materialize_priority;
use super::CorpusError;
use crate::registry::Registry;

/// Writes the materialized mixture to `out`, returning the record count.
///
/// Dataset sources are resolved as `data_dir/<source_uri>` when the registry
/// descriptor carries a relative `source_uri`, else `data_dir/<id>.jsonl`.
/// Files containing malformed records abort the run; a silent skip would
/// change mixture contents without a trace.
pub fn materialize(
    registry: &Registry,
    data_dir: impl AsRef<Path>,
    composition: &Composition,
    shuffle_seed: u64,
    out: impl AsRef<Path>,
) -> Result<u64, CorpusError> {
    let data_dir = data_dir.as_ref();
    let mut selected: Vec<(u64, String, SampleRecord)> = Vec::new();

    for entry in composition.entries() {
        let descriptor = registry
            .get(&entry.dataset)
            .ok_or_else(|| CorpusError::UnknownDataset(entry.dataset.clone()))?;
        let path = if descriptor.source_uri.is_empty() || descriptor.source_uri.contains("://") {
            data_dir.join(format!("{}.jsonl", descriptor.id))
        } else {
            data_dir.join(&descriptor.source_uri)
        };
        let (records, report) = ingest_with_options(
            &path,
            &descriptor.id,
            IngestOptions {
                forbid_images: descriptor.category.name == "Text-only",
            },
        )?;
        if !report.violations.is_empty() {
            return Err(CorpusError::MalformedRecords {
                dataset: descriptor.id.clone(),
                count: report.violations.len(),
            });
        }

        let mut keyed: Vec<(u64, String, SampleRecord)> = records
            .into_iter()
            .map(|record| {
                let priority =
                    materialize_priority(shuffle_seed, &descriptor.id, &record.sample_id);
                (priority, descriptor.id.clone(), record)
            })
            .collect();
        keyed.sort_unstable_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| a.2.sample_id.cmp(&b.2.sample_id))
        });
        let kept = match entry.take {
            Take::All => keyed.len(),
            Take::Count(n) => {
                if n > keyed.len() as u64 {
                    return Err(CorpusError::TakeExceedsCount {
                        dataset: descriptor.id.clone(),
                        take: n,
                        count: keyed.len() as u64,
                    });
                }
                n as usize
            }
        };
        keyed.truncate(kept);
        selected.extend(keyed);
    }

    // Global deterministic shuffle: merge everything by priority.
    selected.sort_unstable_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.sample_id.cmp(&b.2.sample_id))
    });

    let out = out.as_ref();
    let file = File::create(out).map_err(|source| CorpusError::io(out, source))?;
    let mut writer = BufWriter::new(file);
    let written = write_records(&mut writer, selected.iter().map(|(_, _, r)| r))
        .map_err(|source| CorpusError::io(out, source))?;
    Ok(written)
}
