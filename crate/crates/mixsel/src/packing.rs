//! Greedy sample packing into fixed-budget training sequences.
//!
//! Multiple samples are concatenated until the token budget (default 4096)
//! is full, which is how the training framework keeps sequence slots busy.
//! Packing is sequential: it never reorders the (already deterministically
//! shuffled) sample stream and never splits a sample across sequences.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SampleRecord;

/// How sample text is converted to a token count without a real tokenizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthFn {
    /// Whitespace-separated word count.
    #[default]
    Whitespace,
    /// ceil(chars / 4), the usual bytes-per-token rule of thumb.
    CharsDiv4,
    /// Lengths come from an external tokenizer via [`pack_with`].
    External,
}

/// What to do with a sample longer than the budget on its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversizePolicy {
    /// Emit it alone in a flagged single-sample sequence.
    #[default]
    Isolate,
    /// Fail the packing run.
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingConfig {
    pub max_len: u64,
    /// Token cost per image; 576 matches a 336px vision tower with 14px
    /// patches ((336/14)^2).
    pub image_token_cost: u64,
    pub length_fn: LengthFn,
    pub oversize_policy: OversizePolicy,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            max_len: 4096,
            image_token_cost: 576,
            length_fn: LengthFn::Whitespace,
            oversize_policy: OversizePolicy::Isolate,
        }
    }
}

/// One packed training sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub sequence_index: u64,
    pub sample_ids: Vec<String>,
    pub total_len: u64,
    pub oversize: bool,
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("sample {sample_id:?} is {len} tokens, over the {max_len} budget")]
    Oversize {
        sample_id: String,
        len: u64,
        max_len: u64,
    },
    #[error("config selects the external length fn; use pack_with and supply lengths")]
    ExternalLengthFn,
    #[error("io error writing packed manifest: {0}")]
    Io(#[from] std::io::Error),
}

/// Token estimate for one sample: text length per the configured rule plus
/// the per-image cost.
pub fn estimate_length(sample: &SampleRecord, config: &PackingConfig) -> Result<u64, PackError> {
    let text: u64 = sample
        .turns
        .iter()
        .map(|turn| match config.length_fn {
            LengthFn::Whitespace => turn.text.split_whitespace().count() as u64,
            LengthFn::CharsDiv4 => (turn.text.chars().count() as u64).div_ceil(4),
            LengthFn::External => 0,
        })
        .sum();
    if config.length_fn == LengthFn::External {
        return Err(PackError::ExternalLengthFn);
    }
    Ok(text + sample.images.len() as u64 * config.image_token_cost)
}

/// Packs a sample stream using the built-in length rules.
pub fn pack<'a>(
    samples: impl IntoIterator<Item = &'a SampleRecord>,
    config: &PackingConfig,
) -> Result<Vec<PackedSequence>, PackError> {
    if config.length_fn == LengthFn::External {
        return Err(PackError::ExternalLengthFn);
    }
    pack_with(samples, config, |sample| {
        estimate_length(sample, config).expect("built-in length fn")
    })
}

/// Packs a sample stream with caller-supplied lengths (the external
/// tokenizer hook).
///
/// Sequential greedy: each sample joins the open sequence if it fits, else
/// the sequence is closed and a new one starts. Order is preserved and every
/// sample lands in exactly one sequence.
pub fn pack_with<'a, F>(
    samples: impl IntoIterator<Item = &'a SampleRecord>,
    config: &PackingConfig,
    mut length: F,
) -> Result<Vec<PackedSequence>, PackError>
where
    F: FnMut(&SampleRecord) -> u64,
{
    let mut sequences: Vec<PackedSequence> = Vec::new();
    let mut open: Option<PackedSequence> = None;

    let mut close = |sequences: &mut Vec<PackedSequence>, open: &mut Option<PackedSequence>| {
        if let Some(seq) = open.take() {
            sequences.push(seq);
        }
    };

    for sample in samples {
        let len = length(sample);
        if len > config.max_len {
            match config.oversize_policy {
                OversizePolicy::Reject => {
                    return Err(PackError::Oversize {
                        sample_id: sample.sample_id.clone(),
                        len,
                        max_len: config.max_len,
                    });
                }
                OversizePolicy::Isolate => {
                    close(&mut sequences, &mut open);
                    sequences.push(PackedSequence {
                        sequence_index: sequences.len() as u64,
                        sample_ids: vec![sample.sample_id.clone()],
                        total_len: len,
                        oversize: true,
                    });
                    continue;
                }
            }
        }
        match open.as_mut() {
            Some(seq) if seq.total_len + len <= config.max_len => {
                seq.sample_ids.push(sample.sample_id.clone());
                seq.total_len += len;
            }
            _ => {
                close(&mut sequences, &mut open);
                open = Some(PackedSequence {
                    sequence_index: sequences.len() as u64,
                    sample_ids: vec![sample.sample_id.clone()],
                    total_len: len,
                    oversize: false,
                });
            }
        }
    }
    close(&mut sequences, &mut open);

    // Re-number after isolated closes so indexes are contiguous.
    for (i, seq) in sequences.iter_mut().enumerate() {
        seq.sequence_index = i as u64;
    }
    Ok(sequences)
}

/// Writes the packed manifest: one JSON record per sequence.
pub fn write_packed_manifest(
    sequences: &[PackedSequence],
    path: impl AsRef<Path>,
) -> Result<(), PackError> {
    let mut out = fs::File::create(path)?;
    for seq in sequences {
        let line = serde_json::to_string(seq).expect("sequence serializes");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
