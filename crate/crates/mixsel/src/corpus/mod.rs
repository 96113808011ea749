//! Instruction-tuning corpus handling: sample ingestion and validation,
//! mixture composition, deterministic subset sampling, and mixture
//! materialization.

mod composition;
mod materialize;
mod record;
mod subset;

pub use composition::{
    build_improved_baseline, compose, llava_665k, Composition, Lineage, Take,
    LLAVA_DETAIL_SPLIT_ID,
};
pub use materialize::materialize;
pub use record::{
    ingest, ingest_reader, write_records, IngestOptions, IngestReport, RecordViolation, Role,
    SampleRecord, Turn,
};
pub use subset::{
    materialize_priority, read_corpus_ids, sample_subset, subset_priority, SubsetManifest,
    SubsetSpec,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("duplicate dataset {0:?} in composition")]
    DuplicateDataset(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("take {take} for dataset {dataset:?} exceeds its record count {count}")]
    TakeExceedsCount {
        dataset: String,
        take: u64,
        count: u64,
    },
    #[error("composition has no detailed-description entry to substitute")]
    MissingSplit,
    #[error("subset size {requested} exceeds corpus size {available}")]
    Size { requested: u64, available: u64 },
    #[error("duplicate record id {id:?} in corpus manifest")]
    DuplicateRecordId { id: String },
    #[error("dataset {dataset:?} contains {count} malformed records; refusing to materialize")]
    MalformedRecords { dataset: String, count: usize },
    #[error("invalid composition manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
}

impl CorpusError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
