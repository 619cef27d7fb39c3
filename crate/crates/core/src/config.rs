//! Flat `key = value` run configuration covering every pipeline knob.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lfsim::ContrastPrior;
use crate::sampling::{MaskSpec, Pattern, DEFAULT_CENTER_FRACTION};
use crate::training::{LossWeights, ModelConfig, TrainConfig};
use crate::unet::{LayerMode, FULL_WIDTH};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Highest tissue label the contrast prior covers.
pub const PRIOR_MAX_LABEL: u8 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub pattern: Pattern,
    pub rate: f64,
    pub center_fraction: f64,
    pub noise_sigma: f64,
    pub lowpass_fraction: f64,
    pub contrast_low: f64,
    pub contrast_high: f64,
    pub layer_mode: LayerMode,
    pub base_width: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decoupled_weight_decay: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    /// 0 trains every fold.
    pub fold_limit: usize,
    pub loss_mae: f64,
    pub loss_mse: f64,
    pub version: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 1,
            size: 128,
            n_train: 400,
            n_test: 100,
            pattern: Pattern::PseudoRadial,
            rate: 0.3,
            center_fraction: DEFAULT_CENTER_FRACTION,
            noise_sigma: crate::lfsim::DEFAULT_NOISE_SIGMA,
            lowpass_fraction: 0.75,
            contrast_low: 0.7,
            contrast_high: 1.3,
            layer_mode: LayerMode::Standard,
            base_width: FULL_WIDTH,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            decoupled_weight_decay: t.decoupled_weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            folds: t.folds,
            fold_limit: 0,
            loss_mae: t.loss_weights.mae,
            loss_mse: t.loss_weights.mse,
            version: VERSION.to_string(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "seed",
        "size",
        "n_train",
        "n_test",
        "pattern",
        "rate",
        "center_fraction",
        "noise_sigma",
        "lowpass_fraction",
        "contrast_low",
        "contrast_high",
        "layer_mode",
        "base_width",
        "learning_rate",
        "weight_decay",
        "decoupled_weight_decay",
        "batch_size",
        "epochs",
        "folds",
        "fold_limit",
        "loss_mae",
        "loss_mse",
        "version",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "size" => self.size = parse(key, v)?,
            "n_train" => self.n_train = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "pattern" => self.pattern = v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `pattern`")))?,
            "rate" => self.rate = parse(key, v)?,
            "center_fraction" => self.center_fraction = parse(key, v)?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "lowpass_fraction" => self.lowpass_fraction = parse(key, v)?,
            "contrast_low" => self.contrast_low = parse(key, v)?,
            "contrast_high" => self.contrast_high = parse(key, v)?,
            "layer_mode" => self.layer_mode = v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `layer_mode`")))?,
            "base_width" => self.base_width = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "decoupled_weight_decay" => self.decoupled_weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "fold_limit" => self.fold_limit = parse(key, v)?,
            "loss_mae" => self.loss_mae = parse(key, v)?,
            "loss_mse" => self.loss_mse = parse(key, v)?,
            "version" => self.version = v.to_string(),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "size" => self.size.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_test" => self.n_test.to_string(),
            "pattern" => self.pattern.to_string(),
            "rate" => self.rate.to_string(),
            "center_fraction" => self.center_fraction.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "lowpass_fraction" => self.lowpass_fraction.to_string(),
            "contrast_low" => self.contrast_low.to_string(),
            "contrast_high" => self.contrast_high.to_string(),
            "layer_mode" => self.layer_mode.as_str().to_string(),
            "base_width" => self.base_width.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "decoupled_weight_decay" => self.decoupled_weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "folds" => self.folds.to_string(),
            "fold_limit" => self.fold_limit.to_string(),
            "loss_mae" => self.loss_mae.to_string(),
            "loss_mse" => self.loss_mse.to_string(),
            "version" => self.version.clone(),
            _ => return None,
        })
    }

    /// Parses config text over the defaults. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_bytes(path, self.to_text().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.size.is_power_of_two() || self.size < crate::lfsim::MIN_PHANTOM_EDGE {
            return Err(Error::Config(format!(
                "size must be a power of two >= {}, got {}",
                crate::lfsim::MIN_PHANTOM_EDGE,
                self.size
            )));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if !(self.contrast_low > 0.0 && self.contrast_low <= self.contrast_high && self.contrast_high.is_finite()) {
            return Err(Error::Config(format!(
                "contrast range ({}, {}) must satisfy 0 < low <= high",
                self.contrast_low, self.contrast_high
            )));
        }
        self.degradation(0).validate()?;
        self.mask_spec(self.pattern, self.rate, 0).validate()?;
        self.train_config(None).validate()
    }

    pub fn prior(&self) -> Result<ContrastPrior> {
        ContrastPrior::uniform(self.contrast_low, self.contrast_high, PRIOR_MAX_LABEL)
    }

    pub fn degradation(&self, seed: u64) -> crate::lfsim::DegradationConfig {
        crate::lfsim::DegradationConfig {
            noise_sigma: self.noise_sigma,
            lowpass_fraction: self.lowpass_fraction,
            seed,
        }
    }

    pub fn mask_spec(&self, pattern: Pattern, rate: f64, seed: u64) -> MaskSpec {
        MaskSpec {
            pattern,
            target_rate: rate,
            seed,
            center_fraction: self.center_fraction,
        }
    }

    pub fn train_config(&self, threads: Option<usize>) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            decoupled_weight_decay: self.decoupled_weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            folds: self.folds,
            fold_limit: (self.fold_limit > 0).then_some(self.fold_limit),
            loss_weights: LossWeights {
                mae: self.loss_mae,
                mse: self.loss_mse,
            },
            seed: self.seed,
            threads,
        }
    }

    pub fn model_config(&self, channels: usize) -> ModelConfig {
        ModelConfig {
            mode: self.layer_mode,
            channels,
            base_width: self.base_width,
        }
    }
}
