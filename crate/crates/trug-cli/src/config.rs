//! Run configuration: a TOML file with typed sections, every field
//! defaulted to the protocol values the models were tuned with, plus
//! command-line overrides for the common knobs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trug_core::optim::{AnnealSchedule, OptimizerConfig, OptimizerKind};
use trug_core::truncnorm::TruncationInterval;
use trug_core::trug::TrugParams;

use crate::CliError;

/// Environment variable holding the default directory for relative
/// dataset paths.
pub const DATA_DIR_ENV: &str = "TRUG_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rbm,
    Trbm,
    Tggm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Rbm => write!(f, "rbm"),
            ModelKind::Trbm => write!(f, "trbm"),
            ModelKind::Tggm => write!(f, "tggm"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Mandatory: every run is reproducible from (config, seed).
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub ais: AisSection,
}

fn default_epochs() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Input file for idx / seqbin / csv datasets. Relative paths resolve
    /// against the current directory, then against $TRUG_DATA_DIR.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_binarize")]
    pub binarize: BinarizeKind,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Images/sequences reserved for evaluation (taken from the end).
    #[serde(default)]
    pub test_count: usize,
    /// Optional cap on the training examples (from the front).
    #[serde(default)]
    pub train_count: Option<usize>,
    // CSV regression fields.
    #[serde(default)]
    pub target_columns: Vec<usize>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    // Bouncing-ball synthesis fields.
    #[serde(default = "default_n_sequences")]
    pub n_sequences: usize,
    #[serde(default = "default_n_balls")]
    pub n_balls: usize,
    #[serde(default = "default_frame_size")]
    pub frame_size: usize,
    #[serde(default = "default_n_frames")]
    pub n_frames: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// IDX image file, binarized.
    Idx,
    /// Packed-bitmap sequence container.
    Seqbin,
    /// Numeric CSV regression table.
    Csv,
    /// Synthetic bouncing-ball sequences generated from the seed.
    BouncingBalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizeKind {
    Threshold,
    Stochastic,
}

fn default_binarize() -> BinarizeKind {
    BinarizeKind::Threshold
}
fn default_threshold() -> f64 {
    0.5
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_n_sequences() -> usize {
    200
}
fn default_n_balls() -> usize {
    3
}
fn default_frame_size() -> usize {
    30
}
fn default_n_frames() -> usize {
    100
}
fn default_radius() -> f64 {
    2.0
}
fn default_speed() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_truncation")]
    pub truncation: TruncationMode,
    /// Initial truncation interval, one shared pair (per-unit mode starts
    /// every unit here too).
    #[serde(default)]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default)]
    pub learn_lower: bool,
    #[serde(default)]
    pub learn_upper: bool,
    /// Output-noise variance is trained alongside the weights (tggm only).
    #[serde(default = "default_true")]
    pub sigma2_trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    Shared,
    PerUnit,
}

fn default_hidden() -> usize {
    500
}
fn default_truncation() -> TruncationMode {
    TruncationMode::Shared
}
fn default_upper() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl Default for NetworkConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OptimizerSection {
    #[serde(default = "default_opt_kind")]
    pub kind: OptKind,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_trunc_lr_start")]
    pub trunc_lr_start: f64,
    #[serde(default = "default_trunc_lr_end")]
    pub trunc_lr_end: f64,
    /// Steps over which the truncation rate anneals; 0 means the total
    /// planned steps of the run.
    #[serde(default)]
    pub trunc_horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptKind {
    Rmsprop,
    SgdMomentum,
}

fn default_opt_kind() -> OptKind {
    OptKind::Rmsprop
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_decay() -> f64 {
    0.95
}
fn default_momentum() -> f64 {
    0.9
}
fn default_trunc_lr_start() -> f64 {
    1e-3
}
fn default_trunc_lr_end() -> f64 {
    1e-4
}

impl Default for OptimizerSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainingSection {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_cd_k")]
    pub cd_k: usize,
    #[serde(default = "default_vb_cycles")]
    pub vb_cycles: usize,
    /// Checkpoint cadence in epochs.
    #[serde(default = "default_one")]
    pub checkpoint_every: usize,
    /// Metric cadence in epochs.
    #[serde(default = "default_one")]
    pub eval_every: usize,
}

fn default_batch_size() -> usize {
    100
}
fn default_cd_k() -> usize {
    1
}
fn default_vb_cycles() -> usize {
    10
}
fn default_one() -> usize {
    1
}

impl Default for TrainingSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AisSection {
    #[serde(default = "default_n_temps")]
    pub n_temps: usize,
    #[serde(default = "default_n_chains")]
    pub n_chains: usize,
}

fn default_n_temps() -> usize {
    1000
}
fn default_n_chains() -> usize {
    64
}

impl Default for AisSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Collect every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if !(self.network.lower < self.network.upper) {
            problems.push(format!(
                "truncation interval [{}, {}] requires lower < upper",
                self.network.lower, self.network.upper
            ));
        }
        if self.network.hidden == 0 {
            problems.push("hidden unit count must be positive".into());
        }
        if self.training.batch_size == 0 {
            problems.push("batch size must be positive".into());
        }
        if self.training.cd_k == 0 {
            problems.push("cd-k must be positive".into());
        }
        if self.training.vb_cycles == 0 {
            problems.push("vb-cycles must be positive".into());
        }
        if self.training.checkpoint_every == 0 || self.training.eval_every == 0 {
            problems.push("checkpoint/eval cadences are in epochs and must be positive".into());
        }
        for rate in [
            self.optimizer.learning_rate,
            self.optimizer.trunc_lr_start,
            self.optimizer.trunc_lr_end,
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                problems.push(format!("learning rates must be positive and finite, got {rate}"));
            }
        }
        match (self.model, self.dataset.kind) {
            (ModelKind::Rbm, DatasetKind::Idx)
            | (ModelKind::Trbm, DatasetKind::Seqbin)
            | (ModelKind::Trbm, DatasetKind::BouncingBalls)
            | (ModelKind::Tggm, DatasetKind::Csv) => {}
            (m, d) => problems.push(format!("model {m} cannot train on dataset kind {d:?}")),
        }
        match self.dataset.kind {
            DatasetKind::BouncingBalls => {}
            _ => {
                if self.dataset.path.is_none() {
                    problems.push("dataset.path is required for file-backed datasets".into());
                }
            }
        }
        if self.dataset.kind == DatasetKind::Csv && self.dataset.target_columns.is_empty() {
            problems.push("csv datasets need at least one target column".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }

    /// Dataset path resolved against $TRUG_DATA_DIR when it is relative
    /// and does not exist as given.
    pub fn dataset_path(&self) -> Result<PathBuf, CliError> {
        let path = self
            .dataset
            .path
            .as_ref()
            .ok_or_else(|| CliError::Config("dataset.path is required".into()))?;
        if path.is_absolute() || path.exists() {
            return Ok(path.clone());
        }
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            let joined = Path::new(&dir).join(path);
            if joined.exists() {
                return Ok(joined);
            }
        }
        Ok(path.clone())
    }

    pub fn trug_params(&self, units: usize) -> Result<TrugParams, CliError> {
        let interval = TruncationInterval::new(self.network.lower, self.network.upper)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let params = match self.network.truncation {
            TruncationMode::Shared => TrugParams::shared(interval, units),
            TruncationMode::PerUnit => TrugParams::per_unit(vec![interval; units]),
        };
        Ok(params.with_trainable(self.network.learn_lower, self.network.learn_upper))
    }

    pub fn optimizer_config(&self, planned_steps: usize) -> Result<OptimizerConfig, CliError> {
        let kind = match self.optimizer.kind {
            OptKind::Rmsprop => OptimizerKind::RmsProp {
                decay: self.optimizer.decay,
            },
            OptKind::SgdMomentum => OptimizerKind::SgdMomentum {
                momentum: self.optimizer.momentum,
            },
        };
        let horizon = if self.optimizer.trunc_horizon > 0 {
            self.optimizer.trunc_horizon
        } else {
            planned_steps.max(1)
        };
        let trunc_lr =
            AnnealSchedule::new(self.optimizer.trunc_lr_start, self.optimizer.trunc_lr_end, horizon)
                .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(OptimizerConfig {
            kind,
            learning_rate: self.optimizer.learning_rate,
            trunc_lr,
        })
    }

    /// Write the resolved config into the run directory so the run can be
    /// reproduced from its own artifacts.
    pub fn snapshot(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(self.output_dir.join("config.toml"), text)
            .map_err(|e| CliError::Config(format!("cannot write config snapshot: {e}")))?;
        Ok(())
    }
}
