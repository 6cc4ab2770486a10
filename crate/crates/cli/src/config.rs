//! Training settings from a `key = value` file, overridden by flags.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may use `_` or
//! `-`. Recognized keys: `preset`, `model`, `batch_size`, `peak_lr`,
//! `epochs`, `warmup_epochs`, `seed`, `data_root`, `out`, `train_manifest`,
//! `augment`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use autosame_model::train::TrainConfig;
use autosame_model::ModelConfig;
use clap::{Args, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue { line: usize, key: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 60 epochs at the reference learning rate.
    Full,
    /// Short overfitting run for phantom datasets.
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    Desk,
    Large,
    Tiny,
}

impl ModelPreset {
    pub fn config(self) -> ModelConfig {
        match self {
            ModelPreset::Desk => ModelConfig::desk(),
            ModelPreset::Large => ModelConfig::large(),
            ModelPreset::Tiny => ModelConfig::tiny(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum)]
    pub model: Option<ModelPreset>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub peak_lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File listing the study ids to train on.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub augment: Option<bool>,
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: v.to_string(),
    })
}

fn enum_value<T: ValueEnum>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    T::from_str(v, true).map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: v.to_string(),
    })
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut o = Overrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            match key.as_str() {
                "preset" => o.preset = Some(enum_value(line, &key, v)?),
                "model" => o.model = Some(enum_value(line, &key, v)?),
                "batch_size" => o.batch_size = Some(value(line, &key, v)?),
                "peak_lr" => o.peak_lr = Some(value(line, &key, v)?),
                "epochs" => o.epochs = Some(value(line, &key, v)?),
                "warmup_epochs" => o.warmup_epochs = Some(value(line, &key, v)?),
                "seed" => o.seed = Some(value(line, &key, v)?),
                "data_root" => o.data_root = Some(PathBuf::from(v)),
                "out" => o.out = Some(PathBuf::from(v)),
                "train_manifest" => o.train_manifest = Some(PathBuf::from(v)),
                "augment" => o.augment = Some(value(line, &key, v)?),
                _ => return Err(ConfigError::UnknownKey { line, key }),
            }
        }
        Ok(o)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Fields set in `over` win.
    pub fn merged(self, over: &Overrides) -> Self {
        Overrides {
            preset: over.preset.or(self.preset),
            model: over.model.or(self.model),
            batch_size: over.batch_size.or(self.batch_size),
            peak_lr: over.peak_lr.or(self.peak_lr),
            epochs: over.epochs.or(self.epochs),
            warmup_epochs: over.warmup_epochs.or(self.warmup_epochs),
            seed: over.seed.or(self.seed),
            data_root: over.data_root.clone().or(self.data_root),
            out: over.out.clone().or(self.out),
            train_manifest: over.train_manifest.clone().or(self.train_manifest),
            augment: over.augment.or(self.augment),
        }
    }

    /// The preset's configuration with the remaining fields applied.
    pub fn resolve(&self) -> (TrainConfig, ModelConfig) {
        let mut cfg = match self.preset.unwrap_or(Preset::Full) {
            Preset::Full => TrainConfig::default(),
            Preset::Smoke => TrainConfig::smoke(),
        };
        let model = self.model.unwrap_or(ModelPreset::Desk).config();
        cfg.input_size = model.input_size;
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.peak_lr {
            cfg.peak_lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.warmup_epochs {
            cfg.warmup_epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.data_root {
            cfg.data_root = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.train_manifest {
            cfg.train_manifest = Some(v.clone());
        }
        if let Some(v) = self.augment {
            cfg.augment = v;
        }
        (cfg, model)
    }
}
