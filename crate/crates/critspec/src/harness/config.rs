use std::path::PathBuf;

use crate::manifold::TrainMode;
use crate::meanfield::WeightInit;
use crate::network::{Activation, HeadKind};
use crate::{Error, Result};

/// Per-group ADAM hyperparameters. Group 1 covers Euclidean tensors
/// (biases, the readout, and in Euclidean mode the hidden weights), group 2
/// the isotropic scales, group 3 the manifold points.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr_euclidean: f64,
    pub lr_scale: f64,
    pub lr_manifold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr_euclidean: 1e-3,
            lr_scale: 1e-3,
            lr_manifold: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian class clusters: means drawn from a sphere of radius
    /// `3·spread`, isotropic noise of scale `spread` around them.
    Synthetic {
        classes: usize,
        dim: usize,
        per_class_train: usize,
        per_class_test: usize,
        spread: f64,
        seed: u64,
    },
    /// Comma-separated values with a header row; the last column is an
    /// integer class label. A fraction of rows is held out for testing.
    Csv {
        path: PathBuf,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Directory of CIFAR-style binary batches (3073-byte records: one
    /// label byte plus 3072 pixel bytes mapped to [0, 1]). Files with
    /// "test" in the name form the test set.
    CifarBinary { dir: PathBuf },
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Full experiment description; this is the JSON schema the `train`
/// subcommand consumes. Unknown keys are rejected.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Hidden layer count `L`.
    pub depth: usize,
    /// Uniform hidden width.
    pub width: usize,
    pub activation: Activation,
    pub head: HeadKind,
    pub q_star: f64,
    pub init: WeightInit,
    pub mode: TrainMode,
    #[serde(default)]
    pub penalty_lambda: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub minibatch: usize,
    #[serde(default = "default_stats_every")]
    pub stats_every: usize,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub output_dir: PathBuf,
    /// Held-out probe batch size for spectral metrics (fixed at epoch 0).
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    /// Track `‖Ḡ_t − Ḡ_0‖` at every stats epoch (one extra power
    /// iteration per point).
    #[serde(default)]
    pub track_drift: bool,
}

fn default_stats_every() -> usize {
    5
}

fn default_probe_size() -> usize {
    64
}

impl ExperimentConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::Config("depth and width must be positive".into()));
        }
        if !(self.q_star > 0.0) {
            return Err(Error::Config(format!(
                "q_star must be positive, got {}",
                self.q_star
            )));
        }
        if self.stats_every == 0 {
            return Err(Error::Config("stats_every must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be positive".into()));
        }
        if self.penalty_lambda < 0.0 {
            return Err(Error::Config("penalty_lambda must be nonnegative".into()));
        }
        if self.probe_size == 0 {
            return Err(Error::Config("probe_size must be positive".into()));
        }
        if self.mode != TrainMode::Euclidean && self.init != WeightInit::Orthogonal {
            return Err(Error::Config(
                "stiefel/oblique modes require the orthogonal initializer".into(),
            ));
        }
        match &self.dataset {
            DatasetSpec::Synthetic { classes, dim, per_class_train, per_class_test, spread, .. } => {
                if *classes < 2 || *dim == 0 || *per_class_train == 0 || *per_class_test == 0 {
                    return Err(Error::Config(
                        "synthetic dataset needs >= 2 classes and positive dim/counts".into(),
                    ));
                }
                if !spread.is_finite() || *spread < 0.0 {
                    return Err(Error::Config("spread must be finite and nonnegative".into()));
                }
            }
            DatasetSpec::Csv { test_fraction, .. } => {
                if !(0.0..1.0).contains(test_fraction) {
                    return Err(Error::Config(
                        "csv test_fraction must lie in [0, 1)".into(),
                    ));
                }
            }
            DatasetSpec::CifarBinary { .. } => {}
        }
        Ok(())
    }
}
