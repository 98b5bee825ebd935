//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[data]`, `[network]`,
//! `[loss]`, `[optim]`, `[output]` and optionally `[eval]`. Every key has a
//! default; unknown keys are rejected.

use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lsoftmax::loss::LambdaSchedule;
use lsoftmax::optim::TrainConfig;
use lsoftmax::Margin;

use crate::error::CliError;
use crate::netspec;

/// Relative data paths are resolved against this directory when it is set.
pub const DATA_DIR_ENV: &str = "LSOFTMAX_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Mnist,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding the data files; relative to the config file.
    pub directory: String,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Keep only the first N training (test) samples; 0 keeps all.
    pub train_limit: usize,
    pub test_limit: usize,
    /// MNIST: fraction of the training file held out for validation.
    pub val_fraction: f64,
    pub blob_classes: usize,
    pub blob_per_class: usize,
    pub blob_dim: usize,
    pub blob_spread: f64,
    pub blob_seed: u64,
    /// Blobs: train/val/test fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
    pub subtract_mean: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Mnist,
            directory: ".".into(),
            train_images: "train-images-idx3-ubyte.gz".into(),
            train_labels: "train-labels-idx1-ubyte.gz".into(),
            test_images: "t10k-images-idx3-ubyte.gz".into(),
            test_labels: "t10k-labels-idx1-ubyte.gz".into(),
            train_limit: 0,
            test_limit: 0,
            val_fraction: 0.0,
            blob_classes: 4,
            blob_per_class: 100,
            blob_dim: 2,
            blob_spread: 0.3,
            blob_seed: 0,
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
            subtract_mean: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Comma-separated layer list, e.g. `conv 3x3 8 pad 1 prelu, pool, flatten, dense 64`.
    pub layers: String,
    /// Expected output width of the network; 0 means "whatever the layers give".
    pub feature_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layers: "conv 3x3 8 pad 1 prelu, pool, conv 3x3 16 pad 1 prelu, pool, flatten, dense 64".into(),
            feature_dim: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub m: u32,
    pub lambda_initial: f64,
    pub lambda_min: f64,
    pub lambda_gamma: f64,
    pub lambda_window: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            m: 1,
            lambda_initial: 0.0,
            lambda_min: 0.0,
            lambda_gamma: 1.0,
            lambda_window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub lr_drops: Vec<usize>,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Validation error every N iterations; 0 disables.
    pub eval_interval: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 0.1,
            lr_drops: Vec::new(),
            lr_drop_factor: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 256,
            max_iterations: 1000,
            seed: 0,
            eval_interval: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "runs/default".into(),
        }
    }
}

/// Pair verification on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of sampled test pairs, half same-class; 0 disables.
    pub pairs: usize,
    pub pair_seed: u64,
    pub thresholds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pairs: 0,
            pair_seed: 0,
            thresholds: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub output: OutputConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Parse and validate. `text` is kept for error messages only.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.to_string().trim_end())))?;
        cfg.validate(Some(text))?;
        Ok(cfg)
    }

    /// Read a config file and resolve its data paths. The data directory is
    /// `$LSOFTMAX_DATA_DIR` when set, else `[data] directory` taken relative
    /// to the config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = match env::var_os(DATA_DIR_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
                .join(&cfg.data.directory),
        };
        cfg.resolve_data_paths(&base);
        Ok(cfg)
    }

    /// Make the data directory absolute and join relative file names onto it.
    pub fn resolve_data_paths(&mut self, base: &Path) {
        let base = absolute(base);
        self.data.directory = base.to_string_lossy().into_owned();
        for p in [
            &mut self.data.train_images,
            &mut self.data.train_labels,
            &mut self.data.test_images,
            &mut self.data.test_labels,
        ] {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
    }

    /// The full effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self, text: Option<&str>) -> Result<(), CliError> {
        let err = |section: &str, key: &str, msg: String| {
            let at = text
                .and_then(|t| line_of(t, section, key))
                .map(|l| format!(" (line {l})"))
                .unwrap_or_default();
            Err(CliError::Validation(format!("config: [{section}] {key}{at}: {msg}")))
        };
        let d = &self.data;
        if !(0.0..1.0).contains(&d.val_fraction) {
            return err("data", "val_fraction", format!("must be in [0, 1), got {}", d.val_fraction));
        }
        if d.source == DataSource::Blobs {
            if d.blob_classes == 0 || d.blob_per_class == 0 || d.blob_dim == 0 {
                return err("data", "blob_classes", "blob classes, per_class and dim must be positive".into());
            }
            if !(d.blob_spread >= 0.0 && d.blob_spread.is_finite()) {
                return err("data", "blob_spread", format!("must be finite and >= 0, got {}", d.blob_spread));
            }
        }
        if let Err(e) = Margin::new(self.loss.m) {
            return err("loss", "m", e.to_string());
        }
        if let Err(e) = self.lambda_schedule() {
            return err("loss", "lambda_initial", e.to_string());
        }
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return err("optim", "lr", format!("must be positive, got {}", o.lr));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return err("optim", "momentum", format!("must be in [0, 1), got {}", o.momentum));
        }
        if !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
            return err("optim", "weight_decay", format!("must be >= 0, got {}", o.weight_decay));
        }
        if !(o.lr_drop_factor > 0.0 && o.lr_drop_factor <= 1.0) {
            return err("optim", "lr_drop_factor", format!("must be in (0, 1], got {}", o.lr_drop_factor));
        }
        if o.batch_size == 0 {
            return err("optim", "batch_size", "must be positive".into());
        }
        // Shapes depend on the data, so only the syntax is checked here.
        if let Err(e) = netspec::parse_items(&self.network.layers) {
            return err("network", "layers", e);
        }
        if self.eval.thresholds == 0 {
            return err("eval", "thresholds", "must be positive".into());
        }
        Ok(())
    }

    pub fn margin(&self) -> Margin {
        Margin::new(self.loss.m).expect("validated")
    }

    pub fn lambda_schedule(&self) -> lsoftmax::Result<LambdaSchedule> {
        let l = &self.loss;
        LambdaSchedule::new(l.lambda_initial, l.lambda_min, l.lambda_gamma, l.lambda_window)
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.optim;
        TrainConfig {
            learning_rate: o.lr,
            lr_drop_iterations: o.lr_drops.clone(),
            lr_drop_factor: o.lr_drop_factor,
            momentum: o.momentum,
            weight_decay: o.weight_decay,
            batch_size: o.batch_size,
            max_iterations: o.max_iterations,
            margin: self.margin(),
            lambda_schedule: self.lambda_schedule().expect("validated"),
            seed: o.seed,
            eval_interval: (o.eval_interval > 0).then_some(o.eval_interval),
            ..TrainConfig::default()
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

/// 1-based line of `key = …` inside `[section]`, if present.
pub fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}
