//! Benchmark scores, normalization to a common 0–100 scale, the
//! four-benchmark guideline average, and the accept/reject comparison used
//! during dataset selection.
//!
//! MME reports a raw total (perception full score 2000) while the other
//! guideline benchmarks are already percentages, so MME is rescaled by
//! `raw / mme_denominator * 100` before any score is averaged or compared.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Identifies an evaluation benchmark.
///
/// The four core benchmarks are the selection guidelines; any other name is
/// carried through as an extension and ignored by the guideline average.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BenchmarkId {
    Mme,
    MmBenchDev,
    ScienceQaImage,
    SeedImage,
    Other(String),
}

/// The guideline benchmarks, in canonical report order.
pub const CORE_BENCHMARKS: [BenchmarkId; 4] = [
    BenchmarkId::Mme,
    BenchmarkId::MmBenchDev,
    BenchmarkId::ScienceQaImage,
    BenchmarkId::SeedImage,
];

impl BenchmarkId {
    pub fn as_str(&self) -> &str {
        match self {
            BenchmarkId::Mme => "MME",
            BenchmarkId::MmBenchDev => "MMBench-dev",
            BenchmarkId::ScienceQaImage => "ScienceQA-I",
            BenchmarkId::SeedImage => "SEED-I",
            BenchmarkId::Other(name) => name,
        }
    }

    pub fn is_core(&self) -> bool {
        !matches!(self, BenchmarkId::Other(_))
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "MME" => BenchmarkId::Mme,
            "MMBench-dev" => BenchmarkId::MmBenchDev,
            "ScienceQA-I" => BenchmarkId::ScienceQaImage,
            "SEED-I" => BenchmarkId::SeedImage,
            other => BenchmarkId::Other(other.to_string()),
        })
    }
}

impl Serialize for BenchmarkId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BenchmarkId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().expect("benchmark parse is infallible"))
    }
}

/// Outcome of comparing a candidate mixture against the baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("accept"),
            Verdict::Reject => f.write_str("reject"),
        }
    }
}

/// How candidate and baseline score vectors are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonMode {
    /// Compare the four-benchmark averages (the only aggregate the guideline
    /// figures use).
    #[default]
    Average,
}

/// Tunable knobs of the accept/reject rule.
///
/// `epsilon` is the "comparable" band in normalized points: a candidate is
/// accepted when its average is no more than `epsilon` below the baseline
/// average. `mme_denominator` is the raw full score used to map MME onto
/// 0–100.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPolicy {
    #[serde(default)]
    pub mode: ComparisonMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_mme_denominator")]
    pub mme_denominator: f64,
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_mme_denominator() -> f64 {
    2000.0
}

impl Default for ComparisonPolicy {
    fn default() -> Self {
        ComparisonPolicy {
            mode: ComparisonMode::Average,
            epsilon: default_epsilon(),
            mme_denominator: default_mme_denominator(),
        }
    }
}

impl ComparisonPolicy {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.epsilon >= 0.0) {
            return Err(MetricsError::Policy(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.mme_denominator > 0.0) {
            return Err(MetricsError::Policy(format!(
                "mme_denominator must be > 0, got {}",
                self.mme_denominator
            )));
        }
        Ok(())
    }

    /// Admissible raw range for a benchmark under this policy.
    pub fn raw_max(&self, benchmark: &BenchmarkId) -> f64 {
        match benchmark {
            BenchmarkId::Mme => self.mme_denominator,
            _ => 100.0,
        }
    }
}

/// Per-benchmark raw scores plus the evaluator fingerprint they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub raw: BTreeMap<BenchmarkId, f64>,
    pub provenance: String,
}

impl ScoreVector {
    pub fn new(provenance: impl Into<String>) -> Self {
        ScoreVector {
            raw: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    /// Builds a vector holding the four guideline benchmarks.
    pub fn from_core(mme: f64, mmbench: f64, scienceqa: f64, seed: f64) -> Self {
        let mut raw = BTreeMap::new();
        raw.insert(BenchmarkId::Mme, mme);
        raw.insert(BenchmarkId::MmBenchDev, mmbench);
        raw.insert(BenchmarkId::ScienceQaImage, scienceqa);
        raw.insert(BenchmarkId::SeedImage, seed);
        ScoreVector {
            raw,
            provenance: String::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn get(&self, benchmark: &BenchmarkId) -> Option<f64> {
        self.raw.get(benchmark).copied()
    }

    /// Normalized view of one benchmark.
    pub fn normalized(
        &self,
        benchmark: &BenchmarkId,
        policy: &ComparisonPolicy,
    ) -> Result<f64, MetricsError> {
        let raw = self
            .get(benchmark)
            .ok_or_else(|| MetricsError::MissingBenchmark(benchmark.clone()))?;
        normalize(benchmark, raw, policy)
    }

    pub fn has_core_benchmarks(&self) -> bool {
        CORE_BENCHMARKS.iter().all(|b| self.raw.contains_key(b))
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("raw score {raw} for {benchmark} outside admissible range [0, {max}]")]
    Range {
        benchmark: BenchmarkId,
        raw: f64,
        max: f64,
    },
    #[error("score vector is missing core benchmark {0}")]
    MissingBenchmark(BenchmarkId),
    #[error("invalid comparison policy: {0}")]
    Policy(String),
}

/// Maps a raw benchmark score onto the common 0–100 scale.
///
/// MME is divided by the policy denominator; every other benchmark is
/// already a percentage and passes through unchanged.
pub fn normalize(
    benchmark: &BenchmarkId,
    raw: f64,
    policy: &ComparisonPolicy,
) -> Result<f64, MetricsError> {
    let max = policy.raw_max(benchmark);
    if !raw.is_finite() || raw < 0.0 || raw > max {
        return Err(MetricsError::Range {
            benchmark: benchmark.clone(),
            raw,
            max,
        });
    }
    Ok(match benchmark {
        BenchmarkId::Mme => raw / policy.mme_denominator * 100.0,
        _ => raw,
    })
}

/// Arithmetic mean of the four normalized guideline scores.
pub fn average(vector: &ScoreVector, policy: &ComparisonPolicy) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    for benchmark in &CORE_BENCHMARKS {
        sum += vector.normalized(benchmark, policy)?;
    }
    Ok(sum / CORE_BENCHMARKS.len() as f64)
}

/// Verdict plus the signed average-score margin it was based on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub verdict: Verdict,
    pub margin: f64,
}

/// Accepts the candidate when its guideline average surpasses, or stays
/// within `epsilon` of, the baseline average.
pub fn compare(
    candidate: &ScoreVector,
    baseline: &ScoreVector,
    policy: &ComparisonPolicy,
) -> Result<Comparison, MetricsError> {
    policy.validate()?;
    let candidate_avg = average(candidate, policy)?;
    let baseline_avg = average(baseline, policy)?;
    let margin = candidate_avg - baseline_avg;
    let verdict = if margin >= -policy.epsilon {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    Ok(Comparison { verdict, margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy() -> ComparisonPolicy {
        ComparisonPolicy::default()
    }

    #[test]
    fn mme_endpoints_map_to_scale_endpoints() {
        let p = policy();
        assert_eq!(normalize(&BenchmarkId::Mme, 0.0, &p).unwrap(), 0.0);
        assert_eq!(normalize(&BenchmarkId::Mme, 2000.0, &p).unwrap(), 100.0);
    }

    #[test]
    fn mme_reference_value() {
        let p = policy();
        let got = normalize(&BenchmarkId::Mme, 1772.2, &p).unwrap();
        assert!((got - 88.61).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn percentage_benchmarks_pass_through() {
        let p = policy();
        assert_eq!(
            normalize(&BenchmarkId::MmBenchDev, 64.1, &p).unwrap(),
            64.1
        );
        assert_eq!(
            normalize(&BenchmarkId::ScienceQaImage, 70.0, &p).unwrap(),
            70.0
        );
        assert_eq!(normalize(&BenchmarkId::SeedImage, 65.1, &p).unwrap(), 65.1);
    }

    #[test]
    fn out_of_range_raw_is_rejected() {
        let p = policy();
        assert!(matches!(
            normalize(&BenchmarkId::Mme, 2000.1, &p),
            Err(MetricsError::Range { .. })
        ));
        assert!(matches!(
            normalize(&BenchmarkId::SeedImage, -0.5, &p),
            Err(MetricsError::Range { .. })
        ));
        assert!(matches!(
            normalize(&BenchmarkId::MmBenchDev, 100.5, &p),
            Err(MetricsError::Range { .. })
        ));
    }

    #[test]
    fn average_of_reference_row() {
        // MME 1772.2 normalizes to 88.61; (88.61 + 64.1 + 70.0 + 65.1) / 4.
        let v = ScoreVector::from_core(1772.2, 64.1, 70.0, 65.1);
        let got = average(&v, &policy()).unwrap();
        assert!((got - 71.9525).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn average_requires_all_core_benchmarks() {
        let mut v = ScoreVector::from_core(1000.0, 50.0, 50.0, 50.0);
        v.raw.remove(&BenchmarkId::SeedImage);
        assert!(matches!(
            average(&v, &policy()),
            Err(MetricsError::MissingBenchmark(BenchmarkId::SeedImage))
        ));
    }

    #[test]
    fn average_uniform_scores() {
        let v = ScoreVector::from_core(1000.0, 50.0, 50.0, 50.0);
        assert_eq!(average(&v, &policy()).unwrap(), 50.0);
    }

    #[test]
    fn compare_equal_vectors_is_comparable() {
        let v = ScoreVector::from_core(1500.0, 60.0, 70.0, 65.0);
        let cmp = compare(&v, &v, &policy()).unwrap();
        assert_eq!(cmp.verdict, Verdict::Accept);
        assert_eq!(cmp.margin, 0.0);
    }

    #[test]
    fn compare_selected_vs_all_rows() {
        // Candidate mixture beats the everything-mixture on average.
        let candidate = ScoreVector::from_core(1818.7, 73.0, 81.6, 69.9);
        let baseline = ScoreVector::from_core(1790.0, 70.5, 80.1, 70.0);
        let cmp = compare(&candidate, &baseline, &policy()).unwrap();
        assert_eq!(cmp.verdict, Verdict::Accept);
        assert!(cmp.margin > 0.0, "margin {}", cmp.margin);
    }

    #[test]
    fn compare_below_epsilon_band_rejects() {
        let candidate = ScoreVector::from_core(69.4 * 20.0, 69.4, 69.4, 69.4);
        let baseline = ScoreVector::from_core(70.0 * 20.0, 70.0, 70.0, 70.0);
        let cmp = compare(&candidate, &baseline, &policy()).unwrap();
        assert_eq!(cmp.verdict, Verdict::Reject);
        assert!((cmp.margin + 0.6).abs() < 1e-9, "margin {}", cmp.margin);
    }

    #[test]
    fn benchmark_names_round_trip() {
        for b in &CORE_BENCHMARKS {
            let parsed: BenchmarkId = b.as_str().parse().unwrap();
            assert_eq!(&parsed, b);
        }
        let custom: BenchmarkId = "MathVista".parse().unwrap();
        assert_eq!(custom, BenchmarkId::Other("MathVista".to_string()));
        assert!(!custom.is_core());
    }

    proptest! {
        #[test]
        fn normalize_stays_in_bounds_and_is_monotone(
            a in 0.0f64..=2000.0,
            b in 0.0f64..=2000.0,
        ) {
            let p = policy();
            let na = normalize(&BenchmarkId::Mme, a, &p).unwrap();
            let nb = normalize(&BenchmarkId::Mme, b, &p).unwrap();
            prop_assert!((0.0..=100.0).contains(&na));
            prop_assert!((0.0..=100.0).contains(&nb));
            if a < b {
                prop_assert!(na <= nb);
            }
        }

        #[test]
        fn compare_is_reflexive_accepting(
            mme in 0.0f64..=2000.0,
            mmb in 0.0f64..=100.0,
            sqa in 0.0f64..=100.0,
            seed in 0.0f64..=100.0,
            epsilon in 0.0f64..=5.0,
        ) {
            let p = ComparisonPolicy { epsilon, ..ComparisonPolicy::default() };
            let v = ScoreVector::from_core(mme, mmb, sqa, seed);
            let cmp = compare(&v, &v, &p).unwrap();
            prop_assert_eq!(cmp.verdict, Verdict::Accept);
            prop_assert_eq!(cmp.margin, 0.0);
        }

        #[test]
        fn margin_is_antisymmetric(
            c in proptest::array::uniform4(0.0f64..=100.0),
            b in proptest::array::uniform4(0.0f64..=100.0),
        ) {
            let p = policy();
            let cv = ScoreVector::from_core(c[0] * 20.0, c[1], c[2], c[3]);
            let bv = ScoreVector::from_core(b[0] * 20.0, b[1], b[2], b[3]);
            let fwd = compare(&cv, &bv, &p).unwrap();
            let rev = compare(&bv, &cv, &p).unwrap();
            prop_assert!((fwd.margin + rev.margin).abs() < 1e-9);
        }

        #[test]
        fn verdict_survives_common_shift(
            c in proptest::array::uniform4(10.0f64..=80.0),
            b in proptest::array::uniform4(10.0f64..=80.0),
            shift in -10.0f64..=10.0,
        ) {
            // Adding the same constant to every normalized score of both
            // vectors must not flip the verdict.
            let p = policy();
            let build = |s: &[f64; 4], c: f64| {
                ScoreVector::from_core(
                    (s[0] + c) * p.mme_denominator / 100.0,
                    s[1] + c,
                    s[2] + c,
                    s[3] + c,
                )
            };
            let before = compare(&build(&c, 0.0), &build(&b, 0.0), &p).unwrap();
            let after = compare(&build(&c, shift), &build(&b, shift), &p).unwrap();
            prop_assert_eq!(before.verdict, after.verdict);
        }
    }
}
