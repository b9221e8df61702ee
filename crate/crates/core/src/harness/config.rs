use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base_models::BaseKind;
use crate::datagen::{GeneratorConfig, SplitRatios};
use crate::error::{Error, Result};
use crate::harness::CurveFeature;
use crate::lcu::{ModelConfig, TrainConfig};
use crate::nn::AdamConfig;
use crate::objectives::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Generated in memory from `[dataset.synthetic]`.
    Synthetic,
    /// Loaded from CSV files under `path`.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetKind,
    /// External: directory to read. Synthetic: where `generate` writes.
    pub path: Option<PathBuf>,
    /// JSON column map for external data; identity when absent.
    pub column_map: Option<PathBuf>,
    pub synthetic: GeneratorConfig,
    pub split: SplitRatios,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetKind::Synthetic,
            path: None,
            column_map: None,
            synthetic: GeneratorConfig::default(),
            split: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Use generator embeddings (synthetic) or hashed placeholder vectors
    /// (external) instead of files.
    pub mock: bool,
    pub video: Option<PathBuf>,
    pub comment: Option<PathBuf>,
}

/// Network and optimizer settings shared by every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: t.model,
            adam: t.adam,
            epochs: t.epochs,
            batch_size: t.batch_size,
            patience: t.patience,
        }
    }
}

/// Video exposure groups by training-split impression count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureThresholds {
    /// Smallest count in the Low group; below it is None.
    pub low: usize,
    /// Smallest count in the High group.
    pub high: usize,
}

impl Default for ExposureThresholds {
    fn default() -> Self {
        Self { low: 1, high: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub bins: usize,
    /// Bins included in the reported trend statistic.
    pub trend_bins: usize,
    pub features: Vec<CurveFeature>,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            bins: 20,
            trend_bins: 10,
            features: CurveFeature::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: BaseKind,
    pub lcu: bool,
    pub weights: LossWeights,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Comment slots per impression.
    pub slots: usize,
    pub dataset: DatasetConfig,
    pub embeddings: EmbeddingConfig,
    pub train: Hyperparameters,
    pub exposure: ExposureThresholds,
    pub curves: CurvesConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            model: BaseKind::Vr,
            lcu: false,
            weights: LossWeights::default(),
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("out"),
            slots: 6,
            dataset: DatasetConfig::default(),
            embeddings: EmbeddingConfig {
                mock: true,
                ..EmbeddingConfig::default()
            },
            train: Hyperparameters::default(),
            exposure: ExposureThresholds::default(),
            curves: CurvesConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            &mut self.dataset.path,
            &mut self.dataset.column_map,
            &mut self.embeddings.video,
            &mut self.embeddings.comment,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("experiment name `{}` is not a plain file stem", self.name)));
        }
        self.weights.validate()?;
        self.train_config(0).validate()?;
        match self.dataset.source {
            DatasetKind::Synthetic => self.dataset.synthetic.validate()?,
            DatasetKind::External if self.dataset.path.is_none() => {
                return Err(Error::Config("external datasets need `dataset.path`".into()))
            }
            DatasetKind::External => {}
        }
        let e = &self.embeddings;
        if self.lcu && !e.mock && (e.video.is_none() || e.comment.is_none()) {
            return Err(Error::Config(
                "LCU needs `embeddings.video` and `embeddings.comment` or `embeddings.mock = true`".into(),
            ));
        }
        if self.exposure.low == 0 || self.exposure.high <= self.exposure.low {
            return Err(Error::Config("exposure thresholds need 0 < low < high".into()));
        }
        if self.curves.bins == 0 {
            return Err(Error::Config("curves.bins must be positive".into()));
        }
        Ok(())
    }

    /// Run name used for checkpoints and report files, e.g. `exp-lcu-vr`.
    pub fn run_name(&self) -> String {
        if self.lcu {
            format!("{}-lcu-{}", self.name, self.model)
        } else {
            format!("{}-{}", self.name, self.model)
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            model: self.train.model,
            weights: self.weights,
            adam: self.train.adam,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            patience: self.train.patience,
            seed,
            checkpoint_dir: Some(self.checkpoint_dir()),
        }
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoints")
    }

    pub fn checkpoint_path(&self, seed: u64) -> PathBuf {
        self.checkpoint_dir().join(format!("{}-seed{seed}.lcuw", self.run_name()))
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.report.json", self.run_name()))
    }

    /// Where `generate` writes the synthetic dataset.
    pub fn data_dir(&self) -> PathBuf {
        self.dataset.path.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }
}
