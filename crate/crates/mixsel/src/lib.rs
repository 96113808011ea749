//! Curation and experiment-orchestration toolkit for instruction-tuning
//! dataset mixtures.
//!
//! The crate is organized around one workflow: start from a baseline SFT
//! mixture, walk a fixed taxonomy of candidate datasets category by
//! category, fine-tune/evaluate each candidate on top of the frozen round
//! baseline (through a pluggable [`evaluator::Evaluator`]), pool the
//! candidates that hold up, and merge the pool into the baseline before
//! moving on. Every decision is appended to a hash-chained ledger so an
//! interrupted run can resume without re-evaluating anything it already
//! decided.
//!
//! Supporting machinery lives in its own modules:
//!
//! - [`registry`] — the dataset taxonomy and candidate catalog
//! - [`corpus`] — sample ingestion, mixture composition, deterministic subsets
//! - [`packing`] — greedy sample packing into fixed-budget sequences
//! - [`metrics`] — score normalization, the four-benchmark average, accept/reject
//! - [`selection`] — the per-category greedy selection state machine
//! - [`evaluator`] — oracle and external-command evaluation backends
//! - [`schedule`] — warmup+cosine learning-rate schedule and train configs
//! - [`report`] — CSV emitters for scaling and improvement curves

pub mod corpus;
pub mod evaluator;
pub mod metrics;
pub mod packing;
pub mod registry;
pub mod report;
pub mod schedule;
pub mod selection;

pub use corpus::{Composition, SampleRecord, SubsetSpec, Take};
pub use evaluator::{Evaluator, EvaluatorSpec};
pub use metrics::{BenchmarkId, ComparisonPolicy, ScoreVector, Verdict};
pub use registry::{Category, DatasetDescriptor, Registry, Taxonomy};
pub use selection::{DecisionRecord, SelectionState, SelectionSummary};
