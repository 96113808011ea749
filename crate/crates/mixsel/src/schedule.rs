//! Learning-rate schedule (linear warmup into cosine decay) and train-config
//! emission, including the split vision-encoder / adapter learning rates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const TRAIN_CONFIG_HEADER: &str = "# mixsel-train-config v1";

/// Hyperparameters the trainer consumes.
///
/// `lr_vision` is `None` when the vision encoder stays frozen (the adapter
/// then trains at 1e-3); unfreezing it switches the pair to 2e-5 / 2e-4.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub vision_frozen: bool,
    pub lr_vision: Option<f64>,
    pub lr_adapter: f64,
    pub peak_lr_llm: f64,
    pub total_steps: u64,
    pub warmup_frac: f64,
    pub min_lr: f64,
}

impl TrainConfig {
    /// Frozen-encoder pre-training defaults: adapter-only at 1e-3.
    pub fn frozen_defaults(total_steps: u64) -> Self {
        TrainConfig {
            vision_frozen: true,
            lr_vision: None,
            lr_adapter: 1e-3,
            peak_lr_llm: 2e-5,
            total_steps,
            warmup_frac: 0.03,
            min_lr: 0.0,
        }
    }

    /// Unfrozen-encoder defaults: vision 2e-5, adapter 2e-4.
    pub fn unfrozen_defaults(total_steps: u64) -> Self {
        TrainConfig {
            vision_frozen: false,
            lr_vision: Some(2e-5),
            lr_adapter: 2e-4,
            peak_lr_llm: 2e-5,
            total_steps,
            warmup_frac: 0.03,
            min_lr: 0.0,
        }
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_frac * self.total_steps as f64).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.total_steps == 0 {
            return Err(ScheduleError::Invalid("total_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(ScheduleError::Invalid(format!(
                "warmup_frac must be in [0, 1], got {}",
                self.warmup_frac
            )));
        }
        if self.min_lr < 0.0 {
            return Err(ScheduleError::Invalid("min_lr must be >= 0".into()));
        }
        if self.vision_frozen != self.lr_vision.is_none() {
            return Err(ScheduleError::Invalid(
                "lr_vision must be present exactly when the encoder is unfrozen".into(),
            ));
        }
        for (name, lr) in [
            ("lr_vision", self.lr_vision.unwrap_or(1.0)),
            ("lr_adapter", self.lr_adapter),
            ("peak_lr_llm", self.peak_lr_llm),
        ] {
            if !(lr > 0.0) {
                return Err(ScheduleError::Invalid(format!("{name} must be > 0, got {lr}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("step {step} outside schedule range 0..={total}")]
    Range { step: u64, total: u64 },
    #[error("invalid train config: {0}")]
    Invalid(String),
    #[error("io error on config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Learning rate at `step` for a segment whose peak rate is `peak`.
///
/// Warmup climbs linearly from `peak / warmup_steps` at step 0 to `peak` at
/// the last warmup step (so step 0 is never a dead step); from there cosine
/// decay runs down to `min_lr` at `total_steps`. Both pieces equal `peak` at
/// the boundary.
pub fn lr_at(step: u64, config: &TrainConfig, peak: f64) -> Result<f64, ScheduleError> {
    config.validate()?;
    if step > config.total_steps {
        return Err(ScheduleError::Range {
            step,
            total: config.total_steps,
        });
    }
    let warmup_steps = config.warmup_steps();
    if step < warmup_steps {
        return Ok(peak * (step + 1) as f64 / warmup_steps as f64);
    }
    let span = config.total_steps - warmup_steps;
    if span == 0 {
        // Degenerate all-warmup schedule; hold the peak.
        return Ok(peak);
    }
    let phase = (step - warmup_steps) as f64 / span as f64;
    Ok(config.min_lr + (peak - config.min_lr) * 0.5 * (1.0 + (PI * phase).cos()))
}

/// Writes the config as versioned flat key-value text.
///
/// Frozen mode omits the `lr_vision` key entirely, mirroring the N/A row of
/// the pre-training setup table.
pub fn emit_train_config(config: &TrainConfig, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
    config.validate()?;
    let mut out = String::new();
    out.push_str(TRAIN_CONFIG_HEADER);
    out.push('\n');
    out.push_str(&format!("vision_frozen = {}\n", config.vision_frozen));
    if let Some(lr_vision) = config.lr_vision {
        out.push_str(&format!("lr_vision = {lr_vision}\n"));
    }
    out.push_str(&format!("lr_adapter = {}\n", config.lr_adapter));
    out.push_str(&format!("peak_lr_llm = {}\n", config.peak_lr_llm));
    out.push_str(&format!("total_steps = {}\n", config.total_steps));
    out.push_str(&format!("warmup_frac = {}\n", config.warmup_frac));
    out.push_str(&format!("min_lr = {}\n", config.min_lr));
    fs::write(path, out)?;
    Ok(())
}

/// Reads a config written by [`emit_train_config`].
pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig, ScheduleError> {
    let contents = fs::read_to_string(path)?;
    let mut lines = contents.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRAIN_CONFIG_HEADER => {}
        _ => {
            return Err(ScheduleError::Parse {
                line: 1,
                reason: format!("expected header {TRAIN_CONFIG_HEADER:?}"),
            })
        }
    }
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ScheduleError::Parse {
            line: idx + 1,
            reason: "expected key = value".to_string(),
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let take = |fields: &mut BTreeMap<String, String>, key: &str| {
        fields.remove(key).ok_or_else(|| ScheduleError::Parse {
            line: 0,
            reason: format!("missing key {key:?}"),
        })
    };
    let parse_f64 = |value: String, key: &str| {
        value.parse::<f64>().map_err(|_| ScheduleError::Parse {
            line: 0,
            reason: format!("{key} is not a number: {value:?}"),
        })
    };
    let vision_frozen = take(&mut fields, "vision_frozen")? == "true";
    let lr_vision = match fields.remove("lr_vision") {
        Some(v) => Some(parse_f64(v, "lr_vision")?),
        None => None,
    };
    let config = TrainConfig {
        vision_frozen,
        lr_vision,
        lr_adapter: parse_f64(take(&mut fields, "lr_adapter")?, "lr_adapter")?,
        peak_lr_llm: parse_f64(take(&mut fields, "peak_lr_llm")?, "peak_lr_llm")?,
        total_steps: take(&mut fields, "total_steps")?
            .parse::<u64>()
            .map_err(|_| ScheduleError::Parse {
                line: 0,
                reason: "total_steps is not an integer".to_string(),
            })?,
        warmup_frac: parse_f64(take(&mut fields, "warmup_frac")?, "warmup_frac")?,
        min_lr: parse_f64(take(&mut fields, "min_lr")?, "min_lr")?,
    };
    if let Some(unknown) = fields.keys().next() {
        return Err(ScheduleError::Parse {
            line: 0,
            reason: format!("unknown key {unknown:?}"),
        });
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config() -> TrainConfig {
        TrainConfig {
            total_steps: 1000,
            ..TrainConfig::unfrozen_defaults(1000)
        }
    }

    #[test]
    fn warmup_end_hits_peak_exactly() {
        let cfg = config();
        let w = cfg.warmup_steps();
        assert_eq!(w, 30);
        assert_eq!(lr_at(w, &cfg, 2e-4).unwrap(), 2e-4);
        // last warmup step also reaches the peak: (w-1+1)/w == 1
        assert_eq!(lr_at(w - 1, &cfg, 2e-4).unwrap(), 2e-4);
    }

    #[test]
    fn final_step_hits_min_lr_exactly() {
        let cfg = config();
        assert_eq!(lr_at(cfg.total_steps, &cfg, 2e-4).unwrap(), 0.0);
        let floored = TrainConfig {
            min_lr: 1e-6,
            ..config()
        };
        assert_eq!(lr_at(1000, &floored, 2e-4).unwrap(), 1e-6);
    }

    #[test]
    fn half_phase_matches_closed_form() {
        // warmup 30, decay span 970; step 515 sits exactly at phase 1/2.
        let cfg = config();
        let got = lr_at(515, &cfg, 2e-4).unwrap();
        let expected = 1e-4;
        assert!(
            (got - expected).abs() / expected < 1e-9,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn warmup_starts_above_zero() {
        let cfg = config();
        let first = lr_at(0, &cfg, 2e-4).unwrap();
        assert!((first - 2e-4 / 30.0).abs() < 1e-18);
        assert!(first > 0.0);
    }

    #[test]
    fn out_of_range_step_errors() {
        let cfg = config();
        assert!(matches!(
            lr_at(1001, &cfg, 2e-4),
            Err(ScheduleError::Range { step: 1001, .. })
        ));
    }

    #[test]
    fn emit_unfrozen_carries_both_rates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.cfg");
        emit_train_config(&TrainConfig::unfrozen_defaults(5000), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("lr_vision = 0.00002"), "{text}");
        assert!(text.contains("lr_adapter = 0.0002"), "{text}");
    }

    #[test]
    fn emit_frozen_omits_vision_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.cfg");
        emit_train_config(&TrainConfig::frozen_defaults(5000), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("lr_vision"), "{text}");
        assert!(text.contains("lr_adapter = 0.001"), "{text}");
    }

    #[test]
    fn config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for cfg in [
            TrainConfig::frozen_defaults(1234),
            TrainConfig::unfrozen_defaults(98765),
            TrainConfig {
                min_lr: 3.5e-7,
                warmup_frac: 0.1,
                ..TrainConfig::unfrozen_defaults(420)
            },
        ] {
            let path = dir.path().join("roundtrip.cfg");
            emit_train_config(&cfg, &path).unwrap();
            let loaded = load_train_config(&path).unwrap();
            assert_eq!(cfg, loaded);
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        let mut text = String::new();
        emit_train_config(&TrainConfig::frozen_defaults(10), &path).unwrap();
        text.push_str(&std::fs::read_to_string(&path).unwrap());
        text.push_str("mystery = 1\n");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_train_config(&path),
            Err(ScheduleError::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn lr_stays_between_floor_and_peak(
            total in 10u64..5000,
            step_frac in 0.0f64..=1.0,
            warmup_frac in 0.0f64..=0.5,
            min_lr in 0.0f64..=1e-5,
        ) {
            let peak = 2e-4;
            prop_assume!(min_lr <= peak);
            let cfg = TrainConfig {
                total_steps: total,
                warmup_frac,
                min_lr,
                ..TrainConfig::unfrozen_defaults(total)
            };
            let step = (step_frac * total as f64) as u64;
            let lr = lr_at(step, &cfg, peak).unwrap();
            prop_assert!(lr <= peak * (1.0 + 1e-12));
            let floor = if step < cfg.warmup_steps() { 0.0 } else { min_lr };
            prop_assert!(lr >= floor - 1e-18, "lr {} under floor {}", lr, floor);
        }

        #[test]
        fn decay_segment_is_non_increasing(total in 100u64..2000) {
            let cfg = TrainConfig {
                total_steps: total,
                ..TrainConfig::unfrozen_defaults(total)
            };
            let peak = 2e-4;
            let mut prev = f64::INFINITY;
            for step in cfg.warmup_steps()..=total {
                let lr = lr_at(step, &cfg, peak).unwrap();
                prop_assert!(lr <= prev + 1e-18);
                prev = lr;
            }
        }
    }
}
