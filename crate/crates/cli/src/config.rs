//! Run configuration files.
//!
//! A configuration is TOML: `key = value` lines grouped into sections.
//! Relative paths are resolved against the directory of the file they
//! appear in, and the resolved form is what gets echoed to the output
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use qahm::embedding::DEFAULT_CHAIN_STRENGTH;
use qahm::sampler::MetropolisConfig;
use qahm::{BatchMode, TrainingConfig};
use serde::{Deserialize, Serialize};

/// Name of the effective configuration written next to every run.
pub const ECHO_FILE: &str = "config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendName {
    /// Exact classical enumeration.
    Exact,
    /// Exact diagonal of the transverse-field Gibbs state.
    Quantum,
    /// Persistent Metropolis chains.
    Mcmc,
    /// Noisy, temperature-scaled wrapper around `graybox.inner`.
    Graybox,
}

impl fmt::Display for BackendName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendName::Exact => "exact",
            BackendName::Quantum => "quantum",
            BackendName::Mcmc => "mcmc",
            BackendName::Graybox => "graybox",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Digit text file: label then 256 pixel values per line.
    Usps16,
    /// Generated bars-and-stripes patterns.
    BarsAndStripes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub train: TrainSection,
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths from the visible side to the deepest layer.
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub backend: BackendName,
    pub beta: f64,
    pub gamma: f64,
    /// Clip couplings to [-1, 1] and fields to [-2, 2] after every update.
    pub clip: bool,
    pub mcmc: McmcSection,
    pub graybox: GrayboxSection,
    /// Minor-embed the prior into chimera hardware when present.
    pub embedding: Option<EmbeddingSection>,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            backend: BackendName::Exact,
            beta: 1.0,
            gamma: 0.0,
            clip: false,
            mcmc: McmcSection::default(),
            graybox: GrayboxSection::default(),
            embedding: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub sweeps: usize,
    pub burn_in: usize,
    pub chains: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        let c = MetropolisConfig::default();
        McmcSection {
            sweeps: c.sweeps,
            burn_in: c.burn_in,
            chains: c.chains,
        }
    }
}

impl McmcSection {
    pub fn metropolis(&self) -> MetropolisConfig {
        MetropolisConfig {
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            chains: self.chains,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrayboxSection {
    pub inner: BackendName,
    pub beta_scale: f64,
    pub param_noise: f64,
}

impl Default for GrayboxSection {
    fn default() -> Self {
        GrayboxSection {
            inner: BackendName::Mcmc,
            beta_scale: 1.0,
            param_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    /// Chimera dimensions `[m, n, t]`.
    pub chimera: [usize; 3],
    #[serde(default = "default_chain_strength")]
    pub chain_strength: f64,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
}

fn default_chain_strength() -> f64 {
    DEFAULT_CHAIN_STRENGTH
}

fn default_restarts() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub prior_lr: Option<f64>,
    pub sleep_samples: usize,
    pub wake_samples: usize,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    /// Checkpoint interval in epochs; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainingConfig::default();
        TrainSection {
            epochs_phase1: c.epochs_phase1,
            epochs_phase2: c.epochs_phase2,
            lr_start: c.lr_start,
            lr_end: c.lr_end,
            prior_lr: c.prior_lr,
            sleep_samples: c.sleep_samples,
            wake_samples: c.wake_samples,
            batch_size: 0,
            checkpoint_every: c.checkpoint_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    pub path: Option<PathBuf>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Generated samples written after training and used by the audit.
    pub samples: usize,
    /// Tiles per row in sample grids.
    pub grid_cols: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            samples: 100,
            grid_cols: 10,
        }
    }
}

impl FromStr for RunConfig {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads, parses and validates a file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = text
            .parse()
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.data.path {
            cfg.data.path = Some(resolve(base, p));
        }
        if let Some(d) = &cfg.output.dir {
            cfg.output.dir = Some(resolve(base, d));
        }
        Ok(cfg)
    }

    /// Checks values that do not depend on the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            bail!("model.hidden needs at least one positive width");
        }
        if !(self.prior.beta > 0.0) || !(self.prior.gamma >= 0.0) {
            bail!("prior.beta must be positive and prior.gamma nonnegative");
        }
        if self.prior.backend == BackendName::Graybox && self.prior.graybox.inner == BackendName::Graybox {
            bail!("prior.graybox.inner cannot itself be graybox");
        }
        if let Some(e) = &self.prior.embedding {
            if e.chimera.contains(&0) {
                bail!("prior.embedding.chimera dimensions must be positive");
            }
        }
        match self.data.kind {
            DataKind::Usps16 if self.data.path.is_none() => bail!("data.path is required for usps16 data"),
            DataKind::BarsAndStripes if self.data.rows.is_none() || self.data.cols.is_none() => {
                bail!("data.rows and data.cols are required for bars-and-stripes data")
            }
            _ => {}
        }
        if self.output.grid_cols == 0 {
            bail!("output.grid_cols must be positive");
        }
        self.training().validate()?;
        Ok(())
    }

    /// Checks that every referenced input path exists.
    pub fn validate_paths(&self) -> Result<()> {
        if let Some(p) = &self.data.path {
            if !p.is_file() {
                bail!("dataset {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn training(&self) -> TrainingConfig {
        let t = &self.train;
        TrainingConfig {
            epochs_phase1: t.epochs_phase1,
            epochs_phase2: t.epochs_phase2,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            prior_lr: t.prior_lr,
            sleep_samples: t.sleep_samples,
            batch: match t.batch_size {
                0 => BatchMode::Full,
                b => BatchMode::Minibatch(b),
            },
            wake_samples: t.wake_samples,
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
            chain_strength: self
                .prior
                .embedding
                .as_ref()
                .map_or(DEFAULT_CHAIN_STRENGTH, |e| e.chain_strength),
            clip_prior: self.prior.clip,
        }
    }

    /// The effective configuration with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }
}
