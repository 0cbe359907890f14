//! Run configuration: a JSON file whose sections mirror the subcommands,
//! with command-line flags applied on top.

use std::path::{Path, PathBuf};

use patchbag::data::{SplitRatios, SynthConfig};
use patchbag::model::TagSchema;
use patchbag::train::TrainConfig;
use patchbag::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitSection {
            train: r.train,
            val: r.val,
            test: r.test,
            seed: 7,
        }
    }
}

impl SplitSection {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

/// Which part of a dataset a command looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    #[default]
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: Part,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub split: Part,
    pub svg: bool,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection {
            split: Part::All,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Patches sampled per image.
    pub patches: usize,
    /// Side of the sampled window before augmentation crops it to 224.
    pub window: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub schema: TagSchema,
    /// JSON object mapping image file stems to `{task: class}` objects.
    pub labels: Option<PathBuf>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            patches: 32,
            window: 512,
            hidden: patchbag::preprocess::DEFAULT_HIDDEN,
            feature_dim: patchbag::preprocess::DEFAULT_FEATURE_DIM,
            seed: 0,
            schema: TagSchema::histology(),
            labels: None,
        }
    }
}

impl PreprocessSection {
    pub fn validate(&self) -> Result<()> {
        if self.patches == 0 {
            return Err(Error::Config {
                field: "preprocess.patches".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.window < patchbag::preprocess::OUTPUT_SIDE {
            return Err(Error::Config {
                field: "preprocess.window".into(),
                message: format!(
                    "must be at least {} (the augmented patch side), got {}",
                    patchbag::preprocess::OUTPUT_SIDE,
                    self.window
                ),
            });
        }
        if self.hidden == 0 || self.feature_dim == 0 {
            return Err(Error::Config {
                field: "preprocess.feature_dim".into(),
                message: "featurizer widths must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub split: SplitSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub export: ExportSection,
    pub preprocess: PreprocessSection,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            field: "config".into(),
            message: e.to_string(),
        })
    }

    /// Every section is checked, whichever command runs.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.split.ratios().validate()?;
        self.train.validate()?;
        self.preprocess.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Config {
                field: "threads".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}
