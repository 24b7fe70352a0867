//! Run configuration file (TOML).
//!
//! Every field is optional and defaults to the regimen of the selected model
//! kind; unknown keys are rejected. Command-line flags take precedence over
//! file values, which take precedence over defaults.

use serde::Deserialize;

use seqc_core::error::{Error, Result};
use seqc_core::model::{ArchConfig, ArchKind, TcnConfig, WaveNetConfig};
use seqc_core::train::{ControllerConstants, Seeds, TrainConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// "wavenet" or "tcn".
    pub model: Option<String>,
    /// Dataset container path.
    pub data: Option<String>,
    /// Output directory for checkpoint, log and audit files.
    pub out_dir: Option<String>,
    #[serde(default)]
    pub architecture: ArchOverrides,
    #[serde(default)]
    pub training: TrainOverrides,
    pub seeds: Option<Seeds>,
    pub controller: Option<ControllerConstants>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchOverrides {
    pub dilations: Option<Vec<usize>>,
    pub filters: Option<usize>,
    pub kernel_size: Option<usize>,
    pub num_classes: Option<usize>,
    /// Input-layer sequence length (dilated residual classifier only).
    pub input_length: Option<usize>,
    /// Initial adaptive dropout rate (dilated residual classifier only).
    pub dropout_rate: Option<f64>,
    /// Fixed in-block dropout (temporal convolutional baseline only).
    pub block_dropout: Option<f64>,
    pub l2_lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub micro_batch: Option<usize>,
    pub accumulation: Option<usize>,
    pub max_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub initial_dropout: Option<f64>,
    pub adaptive_dropout: Option<bool>,
    /// 0 disables early stopping.
    pub early_stop_patience: Option<usize>,
    pub snapshot_every: Option<usize>,
}

impl RunConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config parse failure: {e}")))
    }

    pub fn model_kind(&self) -> Result<Option<ArchKind>> {
        self.model
            .as_deref()
            .map(|m| m.parse::<ArchKind>())
            .transpose()
    }

    /// Architecture config for the chosen kind with file overrides applied.
    pub fn arch_config(&self, kind: ArchKind, container_len: usize) -> Result<ArchConfig> {
        let o = &self.architecture;
        let cfg = match kind {
            ArchKind::Wavenet => {
                if o.block_dropout.is_some() {
                    return Err(Error::Config(
                        "block_dropout applies to the tcn model only".into(),
                    ));
                }
                let mut c = WaveNetConfig {
                    input_length: container_len,
                    ..WaveNetConfig::default()
                };
                if let Some(v) = &o.dilations {
                    c.dilations = v.clone();
                }
                if let Some(v) = o.filters {
                    c.filters = v;
                }
                if let Some(v) = o.kernel_size {
                    c.kernel_size = v;
                }
                if let Some(v) = o.num_classes {
                    c.num_classes = v;
                }
                if let Some(v) = o.input_length {
                    if v != container_len {
                        return Err(Error::Config(format!(
                            "input_length {v} does not match container sequence length {container_len}"
                        )));
                    }
                    c.input_length = v;
                }
                if let Some(v) = o.dropout_rate {
                    c.dropout_rate = v;
                }
                if let Some(v) = o.l2_lambda {
                    c.l2_lambda = v;
                }
                ArchConfig::Wavenet(c)
            }
            ArchKind::Tcn => {
                if o.dropout_rate.is_some() || o.input_length.is_some() {
                    return Err(Error::Config(
                        "dropout_rate/input_length apply to the wavenet model only".into(),
                    ));
                }
                let mut c = TcnConfig::default();
                if let Some(v) = &o.dilations {
                    c.dilations = v.clone();
                }
                if let Some(v) = o.filters {
                    c.filters = v;
                }
                if let Some(v) = o.kernel_size {
                    c.kernel_size = v;
                }
                if let Some(v) = o.num_classes {
                    c.num_classes = v;
                }
                if let Some(v) = o.block_dropout {
                    c.block_dropout = v;
                }
                if let Some(v) = o.l2_lambda {
                    c.l2_lambda = v;
                }
                ArchConfig::Tcn(c)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training config: regimen defaults for the kind, then file overrides.
    pub fn train_config(&self, kind: ArchKind, arch: &ArchConfig) -> TrainConfig {
        let mut cfg = match kind {
            ArchKind::Wavenet => TrainConfig::wavenet(),
            ArchKind::Tcn => TrainConfig::tcn(),
        };
        cfg.initial_dropout = arch.initial_dropout();
        cfg.l2_lambda = arch.l2_lambda();
        let t = &self.training;
        if let Some(v) = t.micro_batch {
            cfg.micro_batch = v;
        }
        if let Some(v) = t.accumulation {
            cfg.accumulation = v;
        }
        if let Some(v) = t.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = t.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = t.l2_lambda {
            cfg.l2_lambda = v;
        }
        if let Some(v) = t.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = t.initial_dropout {
            cfg.initial_dropout = v;
        }
        if let Some(v) = t.adaptive_dropout {
            cfg.adaptive_dropout = v;
        }
        if let Some(v) = t.early_stop_patience {
            cfg.early_stop_patience = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = t.snapshot_every {
            cfg.snapshot_every = v;
        }
        if let Some(seeds) = self.seeds {
            cfg.seeds = seeds;
        }
        if let Some(c) = &self.controller {
            cfg.controller = c.clone();
        }
        cfg
    }
}
