use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::autodiff::OptimizerConfig;
use crate::data::SplitSpec;
use crate::encoders::{BitOrder, EncoderConfig, Encoding, Rounding};
use crate::neuron::{NeuronConfig, SewMode};

/// Where samples come from. Relative paths are resolved against the data
/// root (see [`TrainConfig::resolve_paths`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        #[serde(default = "default_synthetic_n")]
        n: usize,
        #[serde(default = "default_synthetic_classes")]
        classes: usize,
        #[serde(default)]
        seed: u64,
    },
    /// IDX image/label pair. The test pair is only read when
    /// `split.use_predefined` is set.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        /// Keep only the first `limit` samples of each loaded set.
        #[serde(default)]
        limit: Option<usize>,
    },
    /// Directory holding the CIFAR-10 binary batches.
    Cifar10 {
        dir: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

fn default_synthetic_n() -> usize {
    1200
}

fn default_synthetic_classes() -> usize {
    3
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        match self {
            DatasetConfig::Synthetic { classes, .. } => format!("synthetic-{classes}"),
            // Canonical IDX file names are generic; the directory usually
            // names the dataset.
            DatasetConfig::Idx { images, .. } => images
                .parent()
                .and_then(Path::file_name)
                .or_else(|| images.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "idx".into()),
            DatasetConfig::Cifar10 { .. } => "cifar10".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: Encoding,
    #[serde(default = "default_steps")]
    pub t_ttfs: usize,
    #[serde(default = "default_steps")]
    pub t_rate: usize,
    #[serde(default)]
    pub bit_order: BitOrder,
    #[serde(default)]
    pub rounding: Rounding,
}

fn default_steps() -> usize {
    EncoderConfig::default().t_ttfs
}

impl EncoderSection {
    pub fn new(kind: Encoding) -> Self {
        let d = EncoderConfig::default();
        Self {
            kind,
            t_ttfs: d.t_ttfs,
            t_rate: d.t_rate,
            bit_order: d.bit_order,
            rounding: d.rounding,
        }
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            t_ttfs: self.t_ttfs,
            t_rate: self.t_rate,
            bit_order: self.bit_order,
            rounding: self.rounding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Mlp,
    Convnet,
    SewAdd,
    SewAnd,
    SewIand,
}

impl ArchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::Convnet => "convnet",
            ArchKind::SewAdd => "sew_add",
            ArchKind::SewAnd => "sew_and",
            ArchKind::SewIand => "sew_iand",
        }
    }

    pub fn sew_mode(self) -> Option<SewMode> {
        match self {
            ArchKind::SewAdd => Some(SewMode::Add),
            ArchKind::SewAnd => Some(SewMode::And),
            ArchKind::SewIand => Some(SewMode::Iand),
            ArchKind::Mlp | ArchKind::Convnet => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub kind: ArchKind,
    /// Hidden width of the MLP.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Channel count of the SEW network.
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default)]
    pub neuron: NeuronConfig,
}

fn default_hidden() -> usize {
    128
}

fn default_channels() -> usize {
    8
}

impl ArchSection {
    pub fn new(kind: ArchKind) -> Self {
        Self {
            kind,
            hidden: default_hidden(),
            channels: default_channels(),
            neuron: NeuronConfig::default(),
        }
    }
}

/// One training run, read from TOML:
///
/// ```toml
/// epochs = 3
/// batch_size = 32
/// seed = 7
///
/// [dataset]
/// kind = "synthetic"
/// n = 1200
/// classes = 3
///
/// [encoder]
/// kind = "hybrid_temporal_bit"
///
/// [arch]
/// kind = "mlp"
/// hidden = 64
///
/// [optimizer]
/// kind = "adam"
/// lr = 0.005
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetConfig,
    pub encoder: EncoderSection,
    pub arch: ArchSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitSpec,
    /// Write measured epoch durations into the metrics. Off by default so
    /// that metrics files depend on the configuration alone.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_epochs() -> usize {
    3
}

fn default_batch_size() -> usize {
    32
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        self.encoder
            .config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.split.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.optimizer.validate().map_err(HarnessError::Config)?;
        self.arch
            .neuron
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.arch.hidden == 0 || self.arch.channels == 0 {
            return bad("arch widths must be >= 1".into());
        }
        match &self.dataset {
            DatasetConfig::Synthetic { n, classes, .. } if *classes < 2 || n < classes => {
                bad(format!("synthetic dataset needs n >= classes >= 2, got n={n} classes={classes}"))
            }
            DatasetConfig::Synthetic { .. } if self.split.use_predefined => {
                bad("the synthetic dataset has no predefined test split".into())
            }
            DatasetConfig::Idx {
                test_images,
                test_labels,
                ..
            } if self.split.use_predefined && (test_images.is_none() || test_labels.is_none()) => {
                bad("use_predefined needs dataset.test_images and dataset.test_labels".into())
            }
            DatasetConfig::Idx { limit: Some(0), .. } | DatasetConfig::Cifar10 { limit: Some(0), .. } => {
                bad("dataset.limit must be >= 1".into())
            }
            _ => Ok(()),
        }
    }

    /// Joins relative dataset paths onto `root`.
    pub fn resolve_paths(&mut self, root: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetConfig::Synthetic { .. } => {}
            DatasetConfig::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                join(images);
                join(labels);
                test_images.iter_mut().for_each(join);
                test_labels.iter_mut().for_each(join);
            }
            DatasetConfig::Cifar10 { dir, .. } => join(dir),
        }
    }
}
