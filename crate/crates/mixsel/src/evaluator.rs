//! Evaluation backends: map a composition to a benchmark score vector.
//!
//! Two backends implement the same [`Evaluator`] trait. The external backend
//! hands the composition manifest to a training/evaluation command (a batch
//! job on a cluster) and parses the score file it writes back. The oracle
//! backend is a deterministic additive model over dataset utilities, which
//! makes the whole selection loop testable at desk scale.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Composition;
use crate::metrics::{BenchmarkId, ScoreVector, CORE_BENCHMARKS};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("evaluation command failed (exit {status:?}): {stderr}")]
    CommandFailed {
        status: Option<i32>,
        stderr: String,
    },
    #[error("evaluation command timed out after {0:?}")]
    Timeout(Duration),
    #[error("score file {path}: {reason}")]
    ScoreParse { path: String, reason: String },
    #[error("oracle has no utility entry for dataset {0:?} and default_zero is off")]
    UnknownDataset(String),
    #[error("invalid evaluator spec: {0}")]
    SpecInvalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("spec file parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-benchmark raw-score delta contributed by one dataset.
pub type DeltaMap = BTreeMap<BenchmarkId, f64>;

/// Optional interaction bonus applied when both datasets are in the mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDelta {
    pub a: String,
    pub b: String,
    pub delta: DeltaMap,
}

/// Deterministic synthetic oracle: `raw(b) = base(b) + sum of entry deltas
/// (+ pairwise bonuses)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub base_scores: BTreeMap<BenchmarkId, f64>,
    #[serde(default)]
    pub utility: BTreeMap<String, DeltaMap>,
    #[serde(default)]
    pub pairwise: Vec<PairwiseDelta>,
    /// Datasets missing from the table contribute zero instead of erroring.
    #[serde(default)]
    pub default_zero: bool,
    /// Raw full score of MME, used to bound-check the table.
    #[serde(default = "default_mme_denominator")]
    pub mme_denominator: f64,
}

fn default_mme_denominator() -> f64 {
    2000.0
}

impl OracleSpec {
    /// Checks that no subset of the utility table can push a raw score out
    /// of its admissible range (worst case: all positive deltas together,
    /// or all negative deltas together).
    pub fn validate(&self) -> Result<(), EvaluatorError> {
        for benchmark in &CORE_BENCHMARKS {
            if !self.base_scores.contains_key(benchmark) {
                return Err(EvaluatorError::SpecInvalid(format!(
                    "base_scores is missing core benchmark {benchmark}"
                )));
            }
        }
        let mut bounds: BTreeMap<&BenchmarkId, (f64, f64)> = BTreeMap::new();
        let all_deltas = self
            .utility
            .values()
            .chain(self.pairwise.iter().map(|p| &p.delta));
        for deltas in all_deltas {
            for (benchmark, delta) in deltas {
                if !self.base_scores.contains_key(benchmark) {
                    return Err(EvaluatorError::SpecInvalid(format!(
                        "delta references benchmark {benchmark} absent from base_scores"
                    )));
                }
                let entry = bounds.entry(benchmark).or_insert((0.0, 0.0));
                if *delta >= 0.0 {
                    entry.1 += delta;
                } else {
                    entry.0 += delta;
                }
            }
        }
        for (benchmark, base) in &self.base_scores {
            let max = match benchmark {
                BenchmarkId::Mme => self.mme_denominator,
                _ => 100.0,
            };
            if !(0.0..=max).contains(base) {
                return Err(EvaluatorError::SpecInvalid(format!(
                    "base score {base} for {benchmark} outside [0, {max}]"
                )));
            }
            let (neg, pos) = bounds.get(benchmark).copied().unwrap_or((0.0, 0.0));
            if base + pos > max || base + neg < 0.0 {
                return Err(EvaluatorError::SpecInvalid(format!(
                    "utility table can push {benchmark} outside [0, {max}] \
                     (base {base}, worst-case range [{}, {}])",
                    base + neg,
                    base + pos
                )));
            }
        }
        Ok(())
    }
}

/// External command contract: the command is invoked as
/// `<command...> --composition <manifest> --out <scores>` and must exit 0
/// after writing one `{"benchmark": ..., "raw": ...}` JSON line per score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub command: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout_secs() -> u64 {
    24 * 3600
}

/// A serializable evaluator definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorSpec {
    Oracle(OracleSpec),
    External(ExternalSpec),
}

impl EvaluatorSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvaluatorError> {
        let contents = fs::read_to_string(path)?;
        let mut spec: EvaluatorSpec = serde_json::from_str(&contents)?;
        spec.canonicalize();
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvaluatorError> {
        let mut canonical = self.clone();
        canonicalize_spec(&mut canonical);
        fs::write(path, serde_json::to_string_pretty(&canonical)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EvaluatorError> {
        match self {
            EvaluatorSpec::Oracle(spec) => spec.validate(),
            EvaluatorSpec::External(spec) => {
                if spec.command.trim().is_empty() {
                    return Err(EvaluatorError::SpecInvalid("empty command".into()));
                }
                Ok(())
            }
        }
    }

    fn canonicalize(&mut self) {
        canonicalize_spec(self);
    }

    /// Stable digest of the canonical spec serialization. Identical specs
    /// fingerprint identically regardless of file formatting.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonicalize_spec(&mut canonical);
        let bytes = serde_json::to_vec(&canonical).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Builds the runtime evaluator. `work_dir` is where the external
    /// backend stages manifests and score files; the oracle ignores it.
    pub fn into_evaluator(self, work_dir: impl Into<PathBuf>) -> Box<dyn Evaluator> {
        let fingerprint = self.fingerprint();
        match self {
            EvaluatorSpec::Oracle(spec) => Box::new(OracleEvaluator { spec, fingerprint }),
            EvaluatorSpec::External(spec) => Box::new(ExternalEvaluator {
                spec,
                fingerprint,
                work_dir: work_dir.into(),
            }),
        }
    }
}

fn canonicalize_spec(spec: &mut EvaluatorSpec) {
    if let EvaluatorSpec::Oracle(oracle) = spec {
        for pair in &mut oracle.pairwise {
            if pair.a > pair.b {
                std::mem::swap(&mut pair.a, &mut pair.b);
            }
        }
        oracle
            .pairwise
            .sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    }
}

/// Anything that can score a composition.
pub trait Evaluator {
    fn evaluate(&self, composition: &Composition) -> Result<ScoreVector, EvaluatorError>;
    fn fingerprint(&self) -> &str;
}

pub struct OracleEvaluator {
    spec: OracleSpec,
    fingerprint: String,
}

impl OracleEvaluator {
    pub fn new(spec: OracleSpec) -> Result<Self, EvaluatorError> {
        spec.validate()?;
        let fingerprint = EvaluatorSpec::Oracle(spec.clone()).fingerprint();
        Ok(OracleEvaluator { spec, fingerprint })
    }
}

impl Evaluator for OracleEvaluator {
    fn evaluate(&self, composition: &Composition) -> Result<ScoreVector, EvaluatorError> {
        let mut raw = self.spec.base_scores.clone();
        for dataset in composition.dataset_ids() {
            match self.spec.utility.get(dataset) {
                Some(deltas) => {
                    for (benchmark, delta) in deltas {
                        *raw.get_mut(benchmark).expect("validated at load") += delta;
                    }
                }
                None if self.spec.default_zero => {}
                None => return Err(EvaluatorError::UnknownDataset(dataset.to_string())),
            }
        }
        for pair in &self.spec.pairwise {
            if composition.contains(&pair.a) && composition.contains(&pair.b) {
                for (benchmark, delta) in &pair.delta {
                    *raw.get_mut(benchmark).expect("validated at load") += delta;
                }
            }
        }
        Ok(ScoreVector {
            raw,
            provenance: self.fingerprint.clone(),
        })
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

pub struct ExternalEvaluator {
    spec: ExternalSpec,
    fingerprint: String,
    work_dir: PathBuf,
}

static INVOCATION_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Deserialize)]
struct ScoreLine {
    benchmark: BenchmarkId,
    raw: f64,
}

impl ExternalEvaluator {
    pub fn new(spec: ExternalSpec, work_dir: impl Into<PathBuf>) -> Self {
        let fingerprint = EvaluatorSpec::External(spec.clone()).fingerprint();
        ExternalEvaluator {
            spec,
            fingerprint,
            work_dir: work_dir.into(),
        }
    }

    fn run_once(&self, composition: &Composition) -> Result<ScoreVector, EvaluatorError> {
        // Fresh nonce directory per invocation; the score path cannot exist
        // before the command runs, so a stale file can never be consumed.
        let nonce = INVOCATION_COUNTER.fetch_add(1, Ordering::Relaxed);
        let invocation_dir = self.work_dir.join(format!(
            "eval-{}-{nonce:04}",
            std::process::id()
        ));
        fs::create_dir_all(&invocation_dir)?;
        let manifest_path = invocation_dir.join("composition.cmf");
        let score_path = invocation_dir.join("scores.jsonl");
        composition
            .write_manifest(&manifest_path)
            .map_err(|err| EvaluatorError::SpecInvalid(format!("manifest write: {err}")))?;
        if score_path.exists() {
            return Err(EvaluatorError::ScoreParse {
                path: score_path.display().to_string(),
                reason: "score file existed before invocation".to_string(),
            });
        }

        let mut parts = self.spec.command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| EvaluatorError::SpecInvalid("empty command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .arg("--composition")
            .arg(&manifest_path)
            .arg("--out")
            .arg(&score_path)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()?;

        let timeout = Duration::from_secs(self.spec.timeout_secs);
        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() > timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvaluatorError::Timeout(timeout));
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        if !status.success() {
            let stderr = child
                .stderr
                .take()
                .and_then(|mut s| {
                    let mut buf = String::new();
                    std::io::Read::read_to_string(&mut s, &mut buf).ok()?;
                    Some(buf)
                })
                .unwrap_or_default();
            return Err(EvaluatorError::CommandFailed {
                status: status.code(),
                stderr: stderr.trim().to_string(),
            });
        }

        let contents = fs::read_to_string(&score_path).map_err(|err| EvaluatorError::ScoreParse {
            path: score_path.display().to_string(),
            reason: format!("missing or unreadable: {err}"),
        })?;
        let mut raw = BTreeMap::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let score: ScoreLine =
                serde_json::from_str(line).map_err(|err| EvaluatorError::ScoreParse {
                    path: score_path.display().to_string(),
                    reason: format!("line {}: {err}", idx + 1),
                })?;
            raw.insert(score.benchmark, score.raw);
        }
        Ok(ScoreVector {
            raw,
            provenance: self.fingerprint.clone(),
        })
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, composition: &Composition) -> Result<ScoreVector, EvaluatorError> {
        let mut attempts = 0;
        loop {
            match self.run_once(composition) {
                Ok(scores) => return Ok(scores),
                Err(err) if attempts < self.spec.retries => {
                    attempts += 1;
                    eprintln!("evaluation attempt {attempts} failed, retrying: {err}");
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}
