//! Fine-tuning hand-off manifest. Nothing is trained here; the manifest
//! carries corpus files and hyperparameters for an external trainer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{sha256_hex, MASK_TOKEN, MASK_TOKEN_TARGET_ID};

pub const DEFAULT_LEARNING_RATE: f64 = 1.4e-5;
pub const DEFAULT_BATCH_SIZE: u32 = 32;
pub const DEFAULT_TRAINABLE_FRACTION: f64 = 0.0749;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("stage must be 1 or 2, got {0}")]
    BadStage(u8),
    #[error("no corpus files given")]
    NoCorpus,
    #[error("corpus file {path}: {source}")]
    Corpus {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid override {field}: {reason}")]
    BadOverride { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSize {
    /// 7B base model.
    #[default]
    Small,
    /// 8B base model.
    Base,
    /// 70B base model.
    Large,
}

impl ModelSize {
    pub fn base_model(self) -> &'static str {
        match self {
            ModelSize::Small => "Llama2-7B",
            ModelSize::Base => "Llama3.1-8B",
            ModelSize::Large => "Llama3.1-70B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdapterScheme {
    Lora,
    #[serde(rename = "QLORA_8BIT")]
    Qlora8Bit,
    #[serde(rename = "QLORA_4BIT")]
    Qlora4Bit,
}

/// The tunable part of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub adapter: AdapterScheme,
    pub trainable_fraction: f64,
    /// `None` means train the configured number of epochs without an early stop.
    pub early_stop_epochs: Option<f64>,
}

impl TrainSettings {
    pub fn defaults(stage: u8, size: ModelSize) -> Self {
        let adapter = match size {
            ModelSize::Small | ModelSize::Base => AdapterScheme::Qlora8Bit,
            ModelSize::Large => AdapterScheme::Qlora4Bit,
        };
        let early_stop_epochs = match (stage, size) {
            (2, ModelSize::Large) => Some(1.25),
            (2, _) => Some(2.75),
            _ => None,
        };
        TrainSettings {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            adapter,
            trainable_fraction: DEFAULT_TRAINABLE_FRACTION,
            early_stop_epochs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<u32>,
    #[serde(default)]
    pub adapter: Option<AdapterScheme>,
    #[serde(default)]
    pub trainable_fraction: Option<f64>,
    #[serde(default)]
    pub early_stop_epochs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub value: serde_json::Value,
    pub default: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFileRef {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub stage: u8,
    pub model_size: ModelSize,
    pub base_model: String,
    pub corpus_files: Vec<CorpusFileRef>,
    #[serde(flatten)]
    pub settings: TrainSettings,
    pub mask_token: String,
    /// Vocabulary id the trainer should assign to `mask_token`.
    pub mask_token_target_id: u32,
    pub defaults: TrainSettings,
    /// Overridden fields with the value used and the default side by side.
    pub overrides: BTreeMap<String, Override>,
    pub config_hash: String,
}

impl TrainManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), TrainError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TrainError::BadOverride {
            field,
            reason: format!("must be positive, got {v}"),
        })
    }
}

/// Builds the manifest for `stage` and `size`. Every corpus file must exist;
/// its size and SHA-256 are recorded. `display_root`, when given, is
/// stripped from recorded paths.
pub fn train_manifest(
    stage: u8,
    size: ModelSize,
    corpus_files: &[PathBuf],
    display_root: Option<&Path>,
    overrides: &TrainOverrides,
    config_hash: &str,
) -> Result<TrainManifest, TrainError> {
    if stage != 1 && stage != 2 {
        return Err(TrainError::BadStage(stage));
    }
    if corpus_files.is_empty() {
        return Err(TrainError::NoCorpus);
    }
    let mut files = Vec::with_capacity(corpus_files.len());
    for p in corpus_files {
        let bytes = std::fs::read(p).map_err(|e| TrainError::Corpus {
            path: p.display().to_string(),
            source: e,
        })?;
        let shown = display_root.and_then(|root| p.strip_prefix(root).ok()).unwrap_or(p);
        files.push(CorpusFileRef {
            path: shown.display().to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }

    let defaults = TrainSettings::defaults(stage, size);
    let mut settings = defaults.clone();
    let mut record = BTreeMap::new();
    let mut note = |name: &str, value: serde_json::Value, default: serde_json::Value| {
        record.insert(name.to_string(), Override { value, default });
    };
    if let Some(v) = overrides.learning_rate {
        positive("learning_rate", v)?;
        settings.learning_rate = v;
        note("learning_rate", v.into(), defaults.learning_rate.into());
    }
    if let Some(v) = overrides.batch_size {
        if v == 0 {
            return Err(TrainError::BadOverride {
                field: "batch_size",
                reason: "must be positive".into(),
            });
        }
        settings.batch_size = v;
        note("batch_size", v.into(), defaults.batch_size.into());
    }
    if let Some(v) = overrides.adapter {
        settings.adapter = v;
        note(
            "adapter",
            serde_json::to_value(v).unwrap(),
            serde_json::to_value(defaults.adapter).unwrap(),
        );
    }
    if let Some(v) = overrides.trainable_fraction {
        if !(v > 0.0 && v <= 1.0) {
            return Err(TrainError::BadOverride {
                field: "trainable_fraction",
                reason: format!("must be in (0, 1], got {v}"),
            });
        }
        settings.trainable_fraction = v;
        note("trainable_fraction", v.into(), defaults.trainable_fraction.into());
    }
    if let Some(v) = overrides.early_stop_epochs {
        positive("early_stop_epochs", v)?;
        settings.early_stop_epochs = Some(v);
        note(
            "early_stop_epochs",
            v.into(),
            serde_json::to_value(defaults.early_stop_epochs).unwrap(),
        );
    }
    Ok(TrainManifest {
        stage,
        model_size: size,
        base_model: size.base_model().to_string(),
        corpus_files: files,
        settings,
        mask_token: MASK_TOKEN.to_string(),
        mask_token_target_id: MASK_TOKEN_TARGET_ID,
        defaults,
        overrides: record,
        config_hash: config_hash.to_string(),
    })
}
